use nalgebra::{DMatrix, DVector};

use super::data::PanelDataset;
use super::stack::{stacked_block, ModelSpec, StackDims};
use crate::att::AttSeries;
use crate::error::{Error, Result};
use crate::gmm::{two_step_fit_partitioned, GmmFit, MomentSystem, UnitBlock};

/// Unpacked `γ₁`: per-period `(β_t, F_t)` for `t = 3..T` plus the treated-group
/// moments. The normalizations `F_1 = 0`, `F_2 = 1`, `δ_1 = δ_2 = 0` are implied
/// and `α` is normalized to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaParams {
    pub dims: StackDims,
    /// `beta[t - 3]` holds `β_t`; the intercept coefficient (if the intercept
    /// is in the X set) is the time effect `θ_t`.
    pub beta: Vec<DVector<f64>>,
    /// `f[t - 3]` holds `F_t`.
    pub f: Vec<f64>,
    pub e_dx: DVector<f64>,
    /// `e_dy[t - 1]` holds `E[D Y_t]`.
    pub e_dy: DVector<f64>,
    pub p: f64,
}

impl GammaParams {
    pub fn from_gamma(dims: StackDims, gamma: &DVector<f64>) -> Self {
        assert_eq!(gamma.len(), dims.l1, "gamma has the wrong length");
        let periods = 3..=dims.t_total;
        let beta = periods
            .clone()
            .map(|t| gamma.rows(dims.beta_offset(t), dims.kx).into_owned())
            .collect();
        let f = periods.map(|t| gamma[dims.f_index(t)]).collect();
        Self {
            dims,
            beta,
            f,
            e_dx: gamma.rows(dims.edx_offset(), dims.kx).into_owned(),
            e_dy: gamma.rows(dims.edy_index(1), dims.t_total).into_owned(),
            p: gamma[dims.p_index()],
        }
    }

    pub fn to_gamma(&self) -> DVector<f64> {
        let d = &self.dims;
        let mut g = DVector::zeros(d.l1);
        for t in 3..=d.t_total {
            g.rows_mut(d.beta_offset(t), d.kx).copy_from(&self.beta[t - 3]);
            g[d.f_index(t)] = self.f[t - 3];
        }
        g.rows_mut(d.edx_offset(), d.kx).copy_from(&self.e_dx);
        g.rows_mut(d.edy_index(1), d.t_total).copy_from(&self.e_dy);
        g[d.p_index()] = self.p;
        g
    }

    pub fn beta(&self, t: usize) -> &DVector<f64> {
        &self.beta[t - 3]
    }

    /// `F_t` including the normalized periods 1 and 2.
    pub fn f(&self, t: usize) -> f64 {
        match t {
            1 => 0.0,
            2 => 1.0,
            _ => self.f[t - 3],
        }
    }

    fn check_period(&self, t: usize) -> Result<()> {
        if (3..=self.dims.t_total).contains(&t) {
            Ok(())
        } else {
            Err(Error::BadPeriod(t))
        }
    }

    /// `ATT_t = E[D(Y_t-Y_1)]/p - (E[DX']/p) β_t - F_t E[D(Y_2-Y_1)]/p`.
    pub fn att(&self, t: usize) -> Result<f64> {
        self.check_period(t)?;
        let p = self.p;
        let dy = |s: usize| self.e_dy[s - 1];
        Ok((dy(t) - dy(1)) / p - self.e_dx.dot(self.beta(t)) / p - self.f(t) * (dy(2) - dy(1)) / p)
    }
}

/// GMM fit of the stacked panel system with its unpacked parameters.
#[derive(Debug, Clone)]
pub struct PanelFit {
    pub fit: GmmFit,
    pub params: GammaParams,
}

/// Estimates `γ₁` by two-step GMM with an identity first-step weight.
pub fn estimate_gamma1(data: &PanelDataset, spec: &ModelSpec) -> Result<PanelFit> {
    let dims = spec.dims_for(data)?;
    let p_hat = data.n_treated() as f64 / data.n() as f64;
    if p_hat <= 0.0 || p_hat >= 1.0 {
        return Err(Error::DegeneratePi(p_hat));
    }
    fit_stacked(panel_units(data, spec, &dims), dims)
}

pub(crate) fn panel_units(data: &PanelDataset, spec: &ModelSpec, dims: &StackDims) -> Vec<UnitBlock> {
    (0..data.n())
        .map(|i| {
            let outcomes: Vec<f64> = data.y().row(i).iter().copied().collect();
            let z: Vec<f64> = data.z().row(i).iter().copied().collect();
            stacked_block(&outcomes, &z, data.d()[i], spec, dims)
        })
        .collect()
}

pub(crate) fn fit_stacked(units: Vec<UnitBlock>, dims: StackDims) -> Result<PanelFit> {
    let system = MomentSystem::from_units(units)?;
    let fit = two_step_fit_partitioned(&system, &DMatrix::identity(dims.m1, dims.m1), dims.m)?;
    let params = GammaParams::from_gamma(dims, &fit.gamma);
    if !(params.p > 0.0 && params.p < 1.0) {
        return Err(Error::DegeneratePi(params.p));
    }
    Ok(PanelFit { fit, params })
}

/// Gradient of `ATT_t = g_t(γ₁)` with respect to `γ₁`.
pub fn att_gradient(params: &GammaParams, t: usize) -> Result<DVector<f64>> {
    let att = params.att(t)?;
    let d = &params.dims;
    let p = params.p;
    let ft = params.f(t);
    let mut g = DVector::zeros(d.l1);
    let off = d.beta_offset(t);
    for j in 0..d.kx {
        g[off + j] = -params.e_dx[j] / p;
        g[d.edx_offset() + j] = -params.beta(t)[j] / p;
    }
    g[d.f_index(t)] = -(params.e_dy[1] - params.e_dy[0]) / p;
    g[d.edy_index(1)] = -(1.0 - ft) / p;
    g[d.edy_index(2)] = -ft / p;
    g[d.edy_index(t)] += 1.0 / p;
    g[d.p_index()] = -att / p;
    Ok(g)
}

/// `ATT_t` for `t = 3..T` with delta-method variances and joint covariance.
///
/// Only the fitted parameters and `Σ̂` are used; `data` supplies the sample
/// size and treatment timing.
pub fn att_series(params: &GammaParams, fit: &GmmFit, data: &PanelDataset) -> Result<AttSeries> {
    series_from_fit(params, fit, data.t_star(), data.n())
}

pub(crate) fn series_from_fit(
    params: &GammaParams,
    fit: &GmmFit,
    t_star: usize,
    n: usize,
) -> Result<AttSeries> {
    let periods: Vec<usize> = (3..=params.dims.t_total).collect();
    let att = periods
        .iter()
        .map(|&t| params.att(t))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = DMatrix::zeros(periods.len(), params.dims.l1);
    for (r, &t) in periods.iter().enumerate() {
        grads.set_row(r, &att_gradient(params, t)?.transpose());
    }
    let joint = crate::gmm::symmetrize(&grads * &fit.sigma * grads.transpose());
    Ok(AttSeries::new(t_star, n, periods, att).with_covariance(joint))
}

/// Convenience: fit and produce the ATT series in one call.
pub fn estimate_att(data: &PanelDataset, spec: &ModelSpec) -> Result<(PanelFit, AttSeries)> {
    let pf = estimate_gamma1(data, spec)?;
    let series = att_series(&pf.params, &pf.fit, data)?;
    Ok((pf, series))
}
