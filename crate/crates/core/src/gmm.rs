//! Dense linear GMM engine.
//!
//! Solves `min_γ (m_zy - M_zx γ)' W (m_zy - M_zx γ)` for averaged moment
//! matrices, runs the two-step procedure with `W = Ω̂⁺`, and provides the
//! delta-method quadratic form used for derived parameters.
//!
//! All solves go through QR factorizations or symmetric eigendecompositions;
//! `M' W M` is never inverted directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff used when pseudo-inverting `Ω̂`.
pub const OMEGA_RTOL: f64 = 1e-10;

/// Relative singular-value cutoff used for rank decisions on `M_zx`.
pub const RANK_RTOL: f64 = 1e-10;

/// Relative tolerance for the symmetry check on weighting matrices.
const SYMMETRY_RTOL: f64 = 1e-9;

/// One sample unit's contribution to a stacked linear moment system.
///
/// The moment function is `z (y - x γ)` with `z: m × q`, `x: q × l`, `y: q`.
#[derive(Debug, Clone)]
pub struct UnitBlock {
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl UnitBlock {
    pub fn zu(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let mut u = self.y.clone();
        u.gemv(-1.0, &self.x, gamma, 1.0);
        &self.z * u
    }
}

/// Averaged moment matrices plus per-unit access for `Z_i U_i(γ)`.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    mzx: DMatrix<f64>,
    mzy: DVector<f64>,
    units: Vec<UnitBlock>,
}

impl MomentSystem {
    /// Averages `Z_i X_i'` and `Z_i Y_i` over units in input order.
    pub fn from_units(units: Vec<UnitBlock>) -> Result<Self> {
        let first = units
            .first()
            .ok_or_else(|| Error::InvalidData("moment system needs at least one unit".into()))?;
        let (m, q) = first.z.shape();
        let l = first.x.ncols();
        if m < l {
            return Err(Error::DimensionMismatch(format!(
                "{m} moments cannot identify {l} parameters"
            )));
        }
        let mut mzx = DMatrix::zeros(m, l);
        let mut mzy = DVector::zeros(m);
        for u in &units {
            if u.z.shape() != (m, q) || u.x.shape() != (q, l) || u.y.len() != q {
                return Err(Error::DimensionMismatch(
                    "unit blocks have inconsistent shapes".into(),
                ));
            }
            mzx.gemm(1.0, &u.z, &u.x, 1.0);
            mzy.gemv(1.0, &u.z, &u.y, 1.0);
        }
        let n = units.len() as f64;
        mzx /= n;
        mzy /= n;
        if !all_finite(mzx.iter()) || !all_finite(mzy.iter()) {
            return Err(Error::NonFiniteInput("moment system"));
        }
        Ok(Self { mzx, mzy, units })
    }

    pub fn mzx(&self) -> &DMatrix<f64> {
        &self.mzx
    }

    pub fn mzy(&self) -> &DVector<f64> {
        &self.mzy
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn n_moments(&self) -> usize {
        self.mzx.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.mzx.ncols()
    }

    pub fn units(&self) -> &[UnitBlock] {
        &self.units
    }

    /// `Z_i U_i(γ)` for unit `i`.
    pub fn zu(&self, i: usize, gamma: &DVector<f64>) -> DVector<f64> {
        self.units[i].zu(gamma)
    }

    /// `Ω̂(γ) = n⁻¹ Σ Z_i U_i U_i' Z_i'`.
    pub fn omega(&self, gamma: &DVector<f64>) -> DMatrix<f64> {
        let m = self.n_moments();
        let mut omega = DMatrix::zeros(m, m);
        for u in &self.units {
            let g = u.zu(gamma);
            omega.ger(1.0, &g, &g, 1.0);
        }
        omega / self.n() as f64
    }

    /// Sample moment vector `ḡ(γ) = m_zy - M_zx γ`.
    pub fn gbar(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.mzy - &self.mzx * gamma
    }
}

/// Result of a two-step GMM fit.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gamma: DVector<f64>,
    pub first_step_gamma: DVector<f64>,
    /// `Ω̂` evaluated at the first-step residuals.
    pub omega: DMatrix<f64>,
    pub omega_rank: usize,
    /// Asymptotic covariance of `√n(γ̂ - γ)`.
    pub sigma: DMatrix<f64>,
    pub j_stat: f64,
    pub j_dof: usize,
    pub weighting_used: DMatrix<f64>,
    pub n: usize,
}

impl GmmFit {
    pub fn is_exactly_identified(&self) -> bool {
        self.j_dof == 0
    }

    /// Upper-tail χ² p-value of the J statistic; 1 when exactly identified.
    pub fn j_pvalue(&self) -> f64 {
        chi2_sf(self.j_stat, self.j_dof)
    }
}

/// Upper tail of χ²(dof); `dof = 0` is defined to give 1.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if !x.is_finite() {
        return if x > 0.0 { 0.0 } else { f64::NAN };
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - dist.cdf(x.max(0.0))).clamp(0.0, 1.0)
}

/// Quantile of χ²(dof).
pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    dist.inverse_cdf(p)
}

/// Eigendecomposition-based pseudo-inverse of a symmetric matrix.
///
/// Eigenvalues at or below `rtol · λ_max` are treated as zero. Returns the
/// pseudo-inverse and the retained rank.
pub fn psd_inverse(a: &DMatrix<f64>, rtol: f64) -> Result<(DMatrix<f64>, usize)> {
    let parts = PsdParts::new(a, rtol)?;
    Ok((parts.pinv(), parts.rank))
}

/// Eigen pieces of a symmetric matrix with a rank cutoff applied.
struct PsdParts {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    keep: Vec<bool>,
    rank: usize,
}

impl PsdParts {
    fn new(a: &DMatrix<f64>, rtol: f64) -> Result<Self> {
        check_symmetric(a)?;
        if !all_finite(a.iter()) {
            return Err(Error::NonFiniteInput("symmetric matrix"));
        }
        let eig = SymmetricEigen::new(a.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = rtol * max;
        let keep: Vec<bool> = eig
            .eigenvalues
            .iter()
            .map(|&v| max > 0.0 && v > cutoff)
            .collect();
        let rank = keep.iter().filter(|&&k| k).count();
        Ok(Self { eig, keep, rank })
    }

    fn reconstruct(&self, f: impl Fn(f64, bool) -> f64) -> DMatrix<f64> {
        let v = &self.eig.eigenvectors;
        let n = v.nrows();
        let mut scaled = v.clone();
        for (j, (&lam, &k)) in self.eig.eigenvalues.iter().zip(&self.keep).enumerate() {
            let s = f(lam, k);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        let out = scaled * v.transpose();
        symmetrize(out)
    }

    fn pinv(&self) -> DMatrix<f64> {
        self.reconstruct(|lam, k| if k { 1.0 / lam } else { 0.0 })
    }

    /// Pseudo-inverse with the null space filled in at the largest retained
    /// weight, which keeps the weighting matrix positive definite.
    fn completed_inverse(&self) -> DMatrix<f64> {
        let min_kept = self
            .eig
            .eigenvalues
            .iter()
            .zip(&self.keep)
            .filter(|(_, &k)| k)
            .map(|(&l, _)| l)
            .fold(f64::INFINITY, f64::min);
        let null_weight = if min_kept.is_finite() { 1.0 / min_kept } else { 1.0 };
        self.reconstruct(|lam, k| if k { 1.0 / lam } else { null_weight })
    }

    fn sqrt(&self) -> DMatrix<f64> {
        self.reconstruct(|lam, _| lam.max(0.0).sqrt())
    }
}

/// Linear GMM solution `γ = (M'WM)⁻¹ M'W m_zy`.
///
/// Exactly identified systems are solved as `M⁻¹ m_zy` regardless of `w`.
pub fn solve_linear_gmm(
    mzx: &DMatrix<f64>,
    mzy: &DVector<f64>,
    w: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    Ok(WeightedSolve::new(mzx, w)?.solve(mzy))
}

/// QR factorization of `W^{1/2} M`, reused for the solution and the bread
/// of the sandwich covariance.
struct WeightedSolve {
    w_sqrt: Option<DMatrix<f64>>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl WeightedSolve {
    fn new(mzx: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Self> {
        let (m, l) = mzx.shape();
        if w.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "weighting matrix is {}x{}, expected {m}x{m}",
                w.nrows(),
                w.ncols()
            )));
        }
        if m < l {
            return Err(Error::DimensionMismatch(format!(
                "{m} moments cannot identify {l} parameters"
            )));
        }
        if !all_finite(mzx.iter()) {
            return Err(Error::NonFiniteInput("M_zx"));
        }
        if !all_finite(w.iter()) {
            return Err(Error::NonFiniteInput("weighting matrix"));
        }
        let rank = numerical_rank(mzx, RANK_RTOL);
        if rank < l {
            return Err(Error::RankDeficient { rank, required: l });
        }
        let (w_sqrt, a) = if m == l {
            check_symmetric(w)?;
            (None, mzx.clone())
        } else {
            let root = PsdParts::new(w, 0.0)?.sqrt();
            let a = &root * mzx;
            (Some(root), a)
        };
        if m != l {
            let rank = numerical_rank(&a, RANK_RTOL);
            if rank < l {
                return Err(Error::RankDeficient { rank, required: l });
            }
        }
        let qr = a.qr();
        Ok(Self {
            w_sqrt,
            q: qr.q(),
            r: qr.r(),
        })
    }

    fn weighted(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.w_sqrt {
            Some(root) => root * v,
            None => v.clone(),
        }
    }

    fn solve(&self, mzy: &DVector<f64>) -> DVector<f64> {
        let rhs = self.q.transpose() * self.weighted(mzy);
        self.r
            .solve_upper_triangular(&rhs)
            .expect("R has full rank after the rank check")
    }

    /// `(M'WM)⁻¹ M'W`, an `l × m` matrix.
    fn bread(&self) -> DMatrix<f64> {
        let qt = self.q.transpose();
        let rhs = match &self.w_sqrt {
            Some(root) => qt * root,
            None => qt,
        };
        self.r
            .solve_upper_triangular(&rhs)
            .expect("R has full rank after the rank check")
    }
}

/// Two-step GMM: solve with `first_step_w`, form `Ω̂` from those residuals,
/// then re-solve with `W = Ω̂⁺` (null space completed so `W` stays positive
/// definite). Exactly identified systems skip the second step.
///
/// `sigma` is the sandwich `B Ω̂ B'` with `B = (M'WM)⁻¹M'W` for the final
/// weighting; it equals `(M'Ω̂⁻¹M)⁻¹` whenever `Ω̂` is nonsingular.
pub fn two_step_fit(system: &MomentSystem, first_step_w: &DMatrix<f64>) -> Result<GmmFit> {
    two_step_fit_partitioned(system, first_step_w, system.n_moments())
}

/// Two-step GMM whose second-step weight is block diagonal: the completed
/// `Ω̂⁺` of the leading `efficient` moments, identity on the rest.
///
/// When the trailing moments each pin down one free parameter, those
/// parameters equal their sample moments, while the remaining parameters
/// and `J` coincide with the fully efficient fit.
pub fn two_step_fit_partitioned(
    system: &MomentSystem,
    first_step_w: &DMatrix<f64>,
    efficient: usize,
) -> Result<GmmFit> {
    let m = system.n_moments();
    if efficient > m {
        return Err(Error::DimensionMismatch(format!(
            "{efficient} efficient moments out of {m}"
        )));
    }
    let l = system.n_params();
    let first = WeightedSolve::new(system.mzx(), first_step_w)?;
    let gamma1 = first.solve(system.mzy());
    let omega = system.omega(&gamma1);
    let parts = PsdParts::new(&omega, OMEGA_RTOL)?;
    let omega_rank = parts.rank;

    let (gamma, solver, w_used) = if m == l {
        (gamma1.clone(), first, first_step_w.clone())
    } else {
        if omega_rank < l {
            return Err(Error::OmegaSingular {
                rank: omega_rank,
                required: l,
            });
        }
        let w2 = if efficient == m {
            parts.completed_inverse()
        } else {
            let core = omega.view((0, 0), (efficient, efficient)).into_owned();
            let mut w = DMatrix::identity(m, m);
            w.view_mut((0, 0), (efficient, efficient))
                .copy_from(&PsdParts::new(&core, OMEGA_RTOL)?.completed_inverse());
            w
        };
        let second = WeightedSolve::new(system.mzx(), &w2)?;
        (second.solve(system.mzy()), second, w2)
    };

    let bread = solver.bread();
    let sigma = symmetrize(&bread * &omega * bread.transpose());

    let j_dof = m - l;
    let j_stat = if j_dof == 0 {
        0.0
    } else {
        let g = system.gbar(&gamma);
        let q = (g.transpose() * &w_used * &g)[(0, 0)];
        (system.n() as f64 * q).max(0.0)
    };

    Ok(GmmFit {
        gamma,
        first_step_gamma: gamma1,
        omega,
        omega_rank,
        sigma,
        j_stat,
        j_dof,
        weighting_used: w_used,
        n: system.n(),
    })
}

/// Delta-method variance `∇g' Σ ∇g` (asymptotic, i.e. of `√n(ĝ - g)`).
pub fn delta_method(grad: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if sigma.shape() != (grad.len(), grad.len()) {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries but sigma is {}x{}",
            grad.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !all_finite(grad.iter()) {
        return Err(Error::NonFiniteInput("gradient"));
    }
    let v = (grad.transpose() * sigma * grad)[(0, 0)];
    Ok(v.max(0.0))
}

/// Standard error from an asymptotic variance and a sample size.
pub fn standard_error(variance: f64, n: usize) -> f64 {
    (variance / n as f64).sqrt()
}

/// Number of singular values above `rtol · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = singular_values(a);
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub(crate) fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let asym = (a - a.transpose()).amax();
    if asym.is_nan() || asym > SYMMETRY_RTOL * scale {
        return Err(Error::NonSymmetric(asym));
    }
    Ok(())
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    it.all(|v| v.is_finite())
}
