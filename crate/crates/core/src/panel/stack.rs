//! Stacked per-unit moment blocks.
//!
//! Row layout of `Y_i` (length `q₁`):
//! `(Y_t - Y_1, t = 3..T)`, `(Y_t - Y_1, t = 3..t*-1)`, `D·X`, `D·Y_t (t = 1..T)`, `D`.
//!
//! Parameter layout of `γ₁` (length `l₁`):
//! `(β_3, F_3, …, β_T, F_T, E[DX], E[DY_1], …, E[DY_T], p)`.

use nalgebra::{DMatrix, DVector};

use super::data::PanelDataset;
use crate::error::{Error, Result};
use crate::gmm::UnitBlock;

/// Partition of the covariates into time-varying effects (`x_cols`) and
/// time-invariant effects (`w_cols`). Indices refer to columns of `Z`,
/// where column 0 is the intercept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub x_cols: Vec<usize>,
    pub w_cols: Vec<usize>,
}

impl ModelSpec {
    pub fn new(x_cols: Vec<usize>, w_cols: Vec<usize>) -> Self {
        Self { x_cols, w_cols }
    }

    /// Intercept with time-varying effect (time fixed effects) and every
    /// other covariate in the time-invariant set.
    pub fn intercept_x(k: usize) -> Self {
        Self::new(vec![0], (1..k).collect())
    }

    /// Validates the partition against `k` covariates and the timing.
    pub fn dims(&self, t_total: usize, t_star: usize, k: usize) -> Result<StackDims> {
        let mut seen = vec![0u8; k];
        for &c in self.x_cols.iter().chain(&self.w_cols) {
            if c >= k {
                return Err(Error::SpecMismatch(format!(
                    "covariate index {c} out of range for {k} columns"
                )));
            }
            seen[c] += 1;
        }
        if let Some(c) = seen.iter().position(|&s| s != 1) {
            return Err(Error::SpecMismatch(format!(
                "covariate {c} must appear in exactly one of the X and W sets"
            )));
        }
        if self.w_cols.is_empty() {
            return Err(Error::SpecMismatch(
                "at least one covariate with a time-invariant effect (W) is required".into(),
            ));
        }
        if t_total < 3 || !(3..=t_total).contains(&t_star) {
            return Err(Error::SpecMismatch(format!(
                "timing T={t_total}, t*={t_star} violates T >= 3 and 3 <= t* <= T"
            )));
        }
        Ok(StackDims::new(t_total, t_star, k, self.x_cols.len()))
    }

    pub fn dims_for(&self, data: &PanelDataset) -> Result<StackDims> {
        self.dims(data.t_total(), data.t_star(), data.k())
    }
}

/// Dimensions of the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackDims {
    pub t_total: usize,
    pub t_star: usize,
    pub k: usize,
    pub kx: usize,
    /// Differenced untreated-outcome equations: `(T-2) + (t*-3)`.
    pub q: usize,
    /// Moment conditions for `(β, F)`: `K·q`.
    pub m: usize,
    /// `(β, F)` parameters: `(T-2)(K_X+1)`.
    pub l: usize,
    pub q1: usize,
    pub m1: usize,
    pub l1: usize,
}

impl StackDims {
    pub fn new(t_total: usize, t_star: usize, k: usize, kx: usize) -> Self {
        let q = (t_total - 2) + (t_star - 3);
        let m = k * q;
        let l = (t_total - 2) * (kx + 1);
        let extra = kx + t_total + 1;
        Self {
            t_total,
            t_star,
            k,
            kx,
            q,
            m,
            l,
            q1: q + extra,
            m1: m + extra,
            l1: l + extra,
        }
    }

    /// Number of treated pre-period equations `t* - 3`.
    pub fn n_pre(&self) -> usize {
        self.t_star - 3
    }

    pub fn overid_degree(&self) -> usize {
        self.m - self.l
    }

    /// Index of `β_t`'s first entry in `γ₁`; `F_t` follows the `K_X` betas.
    pub fn beta_offset(&self, t: usize) -> usize {
        (t - 3) * (self.kx + 1)
    }

    pub fn f_index(&self, t: usize) -> usize {
        self.beta_offset(t) + self.kx
    }

    pub fn edx_offset(&self) -> usize {
        self.l
    }

    /// Index of `E[DY_t]` in `γ₁`, `t` 1-indexed.
    pub fn edy_index(&self, t: usize) -> usize {
        self.l + self.kx + t - 1
    }

    pub fn p_index(&self) -> usize {
        self.l1 - 1
    }
}

/// Stacked `(Y_i, Z_i, X_i')` for one unit of a panel.
pub fn build_stacked_unit(
    data: &PanelDataset,
    i: usize,
    spec: &ModelSpec,
) -> Result<UnitBlock> {
    let dims = spec.dims_for(data)?;
    let outcomes: Vec<f64> = data.y().row(i).iter().copied().collect();
    let z: Vec<f64> = data.z().row(i).iter().copied().collect();
    Ok(stacked_block(&outcomes, &z, data.d()[i], spec, &dims))
}

/// Builds a unit's block from its period outcome vector.
///
/// Panel units pass `Y_t`; repeated cross-section rows pass
/// `1{T = t} Y / π_t`, which yields the mixture-moment analogue.
pub(crate) fn stacked_block(
    outcomes: &[f64],
    z: &[f64],
    treated: bool,
    spec: &ModelSpec,
    dims: &StackDims,
) -> UnitBlock {
    let StackDims {
        t_total,
        k,
        kx,
        q,
        m,
        l,
        q1,
        m1,
        l1,
        ..
    } = *dims;
    let n_a = t_total - 2;
    let n_b = dims.n_pre();
    let d = if treated { 1.0 } else { 0.0 };
    let y1 = outcomes[0];
    let short_diff = outcomes[1] - y1;
    let x: Vec<f64> = spec.x_cols.iter().map(|&c| z[c]).collect();

    let mut yv = DVector::zeros(q1);
    let mut zm = DMatrix::zeros(m1, q1);
    let mut xm = DMatrix::zeros(q1, l1);

    let mut write_equation = |row: usize, t: usize, inst_weight: f64| {
        yv[row] = outcomes[t - 1] - y1;
        if inst_weight != 0.0 {
            for (j, &zj) in z.iter().enumerate() {
                zm[(row * k + j, row)] = inst_weight * zj;
            }
        }
        let off = (t - 3) * (kx + 1);
        for (j, &xj) in x.iter().enumerate() {
            xm[(row, off + j)] = xj;
        }
        xm[(row, off + kx)] = short_diff;
    };
    for j in 0..n_a {
        write_equation(j, j + 3, 1.0 - d);
    }
    for j in 0..n_b {
        write_equation(n_a + j, j + 3, d);
    }

    // Identity block for E[DX], E[DY_t], p.
    let mut r = q;
    for &xj in &x {
        yv[r] = d * xj;
        r += 1;
    }
    for &yt in outcomes {
        yv[r] = d * yt;
        r += 1;
    }
    yv[r] = d;
    for j in 0..(q1 - q) {
        zm[(m + j, q + j)] = 1.0;
        xm[(q + j, l + j)] = 1.0;
    }

    UnitBlock {
        z: zm,
        x: xm,
        y: yv,
    }
}
