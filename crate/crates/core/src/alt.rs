//! Alternative identification: serially uncorrelated time-varying errors
//! (other-period outcomes as instruments) and time-varying covariates under
//! strict exogeneity.

use nalgebra::{DMatrix, DVector};

use crate::att::AttSeries;
use crate::error::{Error, Result};
use crate::gmm::{solve_linear_gmm, two_step_fit, GmmFit, MomentSystem, UnitBlock};
use crate::panel::PanelDataset;

fn check_period(t_total: usize, t: usize) -> Result<()> {
    if (3..=t_total).contains(&t) {
        Ok(())
    } else {
        Err(Error::BadPeriod(t))
    }
}

fn identity_two_step(units: Vec<UnitBlock>) -> Result<GmmFit> {
    let system = MomentSystem::from_units(units)?;
    let m = system.n_moments();
    two_step_fit(&system, &DMatrix::identity(m, m))
}

fn treated_mean(d: &[bool], f: impl Fn(usize) -> f64) -> Result<f64> {
    let idx: Vec<usize> = (0..d.len()).filter(|&i| d[i]).collect();
    if idx.is_empty() {
        return Err(Error::InvalidData("no treated units".into()));
    }
    Ok(idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64)
}

// ---------------------------------------------------------------------------
// Serially uncorrelated errors

/// Outcome periods used as instruments for period `t`: untreated units use
/// `3..=T`, treated units `3..t*`, both excluding `t`.
fn outcome_instruments(upper: usize, t: usize) -> Vec<usize> {
    (3..upper).filter(|&s| s != t).collect()
}

fn serial_units(data: &PanelDataset, t: usize) -> Result<Vec<UnitBlock>> {
    let t_total = data.t_total();
    if t_total < 4 {
        return Err(Error::NeedsFourPeriods(t_total));
    }
    check_period(t_total, t)?;
    let k = data.k();
    let untreated_s = outcome_instruments(t_total + 1, t);
    let treated_s = if t < data.t_star() {
        outcome_instruments(data.t_star(), t)
    } else {
        Vec::new()
    };
    let m0 = untreated_s.len() + k;
    let m1 = if t < data.t_star() { treated_s.len() + k } else { 0 };
    Ok((0..data.n())
        .map(|i| {
            let mut z = DMatrix::zeros(m0 + m1, 1);
            let (offset, periods) = if data.d()[i] {
                (m0, &treated_s)
            } else {
                (0, &untreated_s)
            };
            if !data.d()[i] || m1 > 0 {
                for (r, &s) in periods.iter().enumerate() {
                    z[(offset + r, 0)] = data.outcome(i, s);
                }
                for j in 0..k {
                    z[(offset + periods.len() + j, 0)] = data.z()[(i, j)];
                }
            }
            let mut x = DMatrix::zeros(1, k + 1);
            for j in 0..k {
                x[(0, j)] = data.z()[(i, j)];
            }
            x[(0, k)] = data.outcome(i, 2) - data.outcome(i, 1);
            UnitBlock {
                z,
                x,
                y: DVector::from_element(1, data.outcome(i, t) - data.outcome(i, 1)),
            }
        })
        .collect())
}

fn split_delta_f(gamma: &DVector<f64>) -> (DVector<f64>, f64) {
    let k = gamma.len() - 1;
    (gamma.rows(0, k).into_owned(), gamma[k])
}

/// `(δ_t, F_t)` by linear GMM with weighting `w` over the period-`t`
/// moments. Untreated moments come first, then treated pre-period moments
/// when `t < t*`.
pub fn estimate_serial_uncorr(
    data: &PanelDataset,
    t: usize,
    w: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let system = MomentSystem::from_units(serial_units(data, t)?)?;
    let gamma = solve_linear_gmm(system.mzx(), system.mzy(), w)?;
    Ok(split_delta_f(&gamma))
}

/// Two-step GMM fit for period `t`, with J statistic when overidentified.
pub fn serial_uncorr_gmm(data: &PanelDataset, t: usize) -> Result<GmmFit> {
    identity_two_step(serial_units(data, t)?)
}

/// Per-period fits under serially uncorrelated errors.
#[derive(Debug, Clone)]
pub struct AltFitT3 {
    pub periods: Vec<usize>,
    /// `δ_t` over every covariate (the intercept coefficient is `θ_t`).
    pub delta: Vec<DVector<f64>>,
    pub f: Vec<f64>,
    /// Outcome periods instrumenting period `t` among untreated units.
    pub instrument_periods: Vec<Vec<usize>>,
    pub fits: Vec<GmmFit>,
}

pub fn fit_serial_uncorr(data: &PanelDataset) -> Result<AltFitT3> {
    let periods: Vec<usize> = (3..=data.t_total()).collect();
    let mut out = AltFitT3 {
        periods: periods.clone(),
        delta: Vec::new(),
        f: Vec::new(),
        instrument_periods: Vec::new(),
        fits: Vec::new(),
    };
    for &t in &periods {
        let fit = serial_uncorr_gmm(data, t)?;
        let (delta, f) = split_delta_f(&fit.gamma);
        out.delta.push(delta);
        out.f.push(f);
        out.instrument_periods.push(outcome_instruments(data.t_total() + 1, t));
        out.fits.push(fit);
    }
    Ok(out)
}

/// `ATT_t = Ȳ_t - (Ȳ_1 + Z̄'δ_t + F_t(Ȳ_2 - Ȳ_1))` over treated units.
/// Periods before `t*` are placebo estimates.
pub fn att_serial_uncorr(data: &PanelDataset, fits: &AltFitT3) -> Result<AttSeries> {
    let d = data.d();
    let mut att = Vec::with_capacity(fits.periods.len());
    for (r, &t) in fits.periods.iter().enumerate() {
        let delta = &fits.delta[r];
        if delta.len() != data.k() {
            return Err(Error::DimensionMismatch(
                "fits do not match the dataset's covariates".into(),
            ));
        }
        let value = treated_mean(d, |i| {
            let zd: f64 = (0..data.k()).map(|j| data.z()[(i, j)] * delta[j]).sum();
            data.outcome(i, t)
                - data.outcome(i, 1)
                - zd
                - fits.f[r] * (data.outcome(i, 2) - data.outcome(i, 1))
        })?;
        att.push(value);
    }
    Ok(AttSeries::new(data.t_star(), data.n(), fits.periods.clone(), att))
}

// ---------------------------------------------------------------------------
// Time-varying covariates

/// Balanced panel with covariates that vary over time.
#[derive(Debug, Clone, PartialEq)]
pub struct TvPanelDataset {
    y: DMatrix<f64>,
    /// `x[j]` is the `n × T` matrix of covariate `j`.
    x: Vec<DMatrix<f64>>,
    d: Vec<bool>,
    t_star: usize,
    covariate_names: Vec<String>,
}

impl TvPanelDataset {
    pub fn new(
        y: DMatrix<f64>,
        x: Vec<DMatrix<f64>>,
        d: Vec<bool>,
        t_star: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let data = Self::from_parts(y, x, d, t_star, covariate_names)?;
        let treated = data.d.iter().filter(|&&v| v).count();
        if treated == 0 || treated == data.n() {
            return Err(Error::InvalidData(
                "panel needs at least one treated and one untreated unit".into(),
            ));
        }
        Ok(data)
    }

    pub(crate) fn from_parts(
        y: DMatrix<f64>,
        x: Vec<DMatrix<f64>>,
        d: Vec<bool>,
        t_star: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let (n, t_total) = y.shape();
        if n == 0 || t_total < 3 || !(3..=t_total).contains(&t_star) {
            return Err(Error::InvalidData(format!(
                "need n > 0, T >= 3 and 3 <= t* <= T (n = {n}, T = {t_total}, t* = {t_star})"
            )));
        }
        if d.len() != n || x.iter().any(|m| m.shape() != (n, t_total)) {
            return Err(Error::DimensionMismatch(
                "covariate arrays and treatment flags must match the outcome panel".into(),
            ));
        }
        if covariate_names.len() != x.len() {
            return Err(Error::DimensionMismatch(
                "one name per time-varying covariate required".into(),
            ));
        }
        if y.iter().chain(x.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("time-varying panel"));
        }
        Ok(Self {
            y,
            x,
            d,
            t_star,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_total(&self) -> usize {
        self.y.ncols()
    }

    pub fn t_star(&self) -> usize {
        self.t_star
    }

    pub fn kx(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn covariates(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcome(&self, i: usize, t: usize) -> f64 {
        self.y[(i, t - 1)]
    }

    /// Covariate `j` of unit `i` in 1-indexed period `t`.
    pub fn x(&self, i: usize, t: usize, j: usize) -> f64 {
        self.x[j][(i, t - 1)]
    }

    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        Self::from_parts(
            self.y.select_rows(idx),
            self.x.iter().map(|m| m.select_rows(idx)).collect(),
            idx.iter().map(|&i| self.d[i]).collect(),
            self.t_star,
            self.covariate_names.clone(),
        )
    }
}

/// Per-period parameters under time-varying covariates. `zeta` is the free
/// coefficient on `X_2 - X_1`; in the model it equals `-β F_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvParams {
    pub t: usize,
    pub theta: f64,
    pub beta: DVector<f64>,
    pub f: f64,
    pub zeta: DVector<f64>,
}

impl TvParams {
    fn from_gamma(t: usize, kx: usize, g: &DVector<f64>) -> Self {
        Self {
            t,
            theta: g[0],
            beta: g.rows(1, kx).into_owned(),
            f: g[1 + kx],
            zeta: g.rows(2 + kx, kx).into_owned(),
        }
    }

    /// `ζ_t + β F_t`, zero in the model.
    pub fn zeta_gap(&self) -> DVector<f64> {
        &self.zeta + &self.beta * self.f
    }
}

fn tv_units(data: &TvPanelDataset, t: usize) -> Result<Vec<UnitBlock>> {
    check_period(data.t_total(), t)?;
    let kx = data.kx();
    let t_total = data.t_total();
    let m = 1 + t_total * kx;
    let l = 2 + 2 * kx;
    Ok((0..data.n())
        .filter(|&i| !data.d[i])
        .map(|i| {
            let mut z = DMatrix::zeros(m, 1);
            z[(0, 0)] = 1.0;
            for s in 1..=t_total {
                for j in 0..kx {
                    z[(1 + (s - 1) * kx + j, 0)] = data.x(i, s, j);
                }
            }
            let mut x = DMatrix::zeros(1, l);
            x[(0, 0)] = 1.0;
            for j in 0..kx {
                x[(0, 1 + j)] = data.x(i, t, j) - data.x(i, 1, j);
                x[(0, 2 + kx + j)] = data.x(i, 2, j) - data.x(i, 1, j);
            }
            x[(0, 1 + kx)] = data.outcome(i, 2) - data.outcome(i, 1);
            UnitBlock {
                z,
                x,
                y: DVector::from_element(1, data.outcome(i, t) - data.outcome(i, 1)),
            }
        })
        .collect())
}

/// `(θ_t, β, F_t, ζ_t)` from untreated units with weighting `w`.
pub fn estimate_timevarying(data: &TvPanelDataset, t: usize, w: &DMatrix<f64>) -> Result<TvParams> {
    let system = MomentSystem::from_units(tv_units(data, t)?)?;
    let gamma = solve_linear_gmm(system.mzx(), system.mzy(), w)?;
    Ok(TvParams::from_gamma(t, data.kx(), &gamma))
}

pub fn timevarying_gmm(data: &TvPanelDataset, t: usize) -> Result<GmmFit> {
    identity_two_step(tv_units(data, t)?)
}

#[derive(Debug, Clone)]
pub struct AltFitT4 {
    pub params: Vec<TvParams>,
    pub fits: Vec<GmmFit>,
}

pub fn fit_timevarying(data: &TvPanelDataset) -> Result<AltFitT4> {
    let mut out = AltFitT4 {
        params: Vec::new(),
        fits: Vec::new(),
    };
    for t in 3..=data.t_total() {
        let fit = timevarying_gmm(data, t)?;
        out.params.push(TvParams::from_gamma(t, data.kx(), &fit.gamma));
        out.fits.push(fit);
    }
    Ok(out)
}

/// `ATT_t = Ȳ_t - (Ȳ_1 + θ_t + ΔX̄_t'β + F_t ΔȲ_2 + ΔX̄_2'ζ_t)` over
/// treated units, with `ΔX_s = X_s - X_1`.
pub fn att_timevarying(data: &TvPanelDataset, fits: &AltFitT4) -> Result<AttSeries> {
    let kx = data.kx();
    let mut periods = Vec::new();
    let mut att = Vec::new();
    for p in &fits.params {
        if p.beta.len() != kx {
            return Err(Error::DimensionMismatch(
                "fits do not match the dataset's covariates".into(),
            ));
        }
        let t = p.t;
        let value = treated_mean(&data.d, |i| {
            let mut pred = p.theta + p.f * (data.outcome(i, 2) - data.outcome(i, 1));
            for j in 0..kx {
                let x1 = data.x(i, 1, j);
                pred += (data.x(i, t, j) - x1) * p.beta[j] + (data.x(i, 2, j) - x1) * p.zeta[j];
            }
            data.outcome(i, t) - data.outcome(i, 1) - pred
        })?;
        periods.push(t);
        att.push(value);
    }
    Ok(AttSeries::new(data.t_star, data.n(), periods, att))
}
