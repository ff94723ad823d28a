//! Bootstrap standard errors, pre-treatment Wald tests and
//! over-identification reports.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alt::{att_serial_uncorr, att_timevarying, fit_serial_uncorr, fit_timevarying, TvPanelDataset};
use crate::att::AttSeries;
use crate::comparators::{comparator_series, did_att, lt_att};
use crate::error::{Error, Result};
use crate::gmm::{chi2_sf, psd_inverse, GmmFit};
use crate::panel::{estimate_att, ModelSpec, PanelDataset};
use crate::rc::{estimate_att_rc, RcDataset};
use crate::simulation::replication_rng;

/// Minimum number of bootstrap replications.
pub const MIN_REPLICATIONS: usize = 100;
/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.05;
/// Relative eigenvalue cutoff for the Wald pseudo-inverse.
pub const WALD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimator {
    IfePanel,
    IfeRc,
    Did,
    Lt,
    SerialUncorr,
    TimeVarying,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::IfePanel => "ife-panel",
            Estimator::IfeRc => "ife-rc",
            Estimator::Did => "did",
            Estimator::Lt => "lt",
            Estimator::SerialUncorr => "t3",
            Estimator::TimeVarying => "t4",
        }
    }
}

/// Borrowed input of any supported shape.
#[derive(Debug, Clone, Copy)]
pub enum InputData<'a> {
    Panel(&'a PanelDataset),
    Rc(&'a RcDataset),
    Tv(&'a TvPanelDataset),
}

impl InputData<'_> {
    fn n(&self) -> usize {
        match self {
            InputData::Panel(d) => d.n(),
            InputData::Rc(d) => d.n(),
            InputData::Tv(d) => d.n(),
        }
    }
}

fn wrong_input(est: Estimator) -> Error {
    Error::InvalidArgument(format!("estimator {} does not accept this data layout", est.label()))
}

/// Point estimates of the chosen estimator.
pub fn point_estimate(data: InputData<'_>, spec: &ModelSpec, est: Estimator) -> Result<AttSeries> {
    match (est, data) {
        (Estimator::IfePanel, InputData::Panel(d)) => estimate_att(d, spec).map(|(_, s)| s),
        (Estimator::IfeRc, InputData::Rc(d)) => estimate_att_rc(d, spec).map(|f| f.series),
        (Estimator::Did, InputData::Panel(d)) => comparator_series(d, did_att),
        (Estimator::Lt, InputData::Panel(d)) => comparator_series(d, lt_att),
        (Estimator::SerialUncorr, InputData::Panel(d)) => att_serial_uncorr(d, &fit_serial_uncorr(d)?),
        (Estimator::TimeVarying, InputData::Tv(d)) => att_timevarying(d, &fit_timevarying(d)?),
        _ => Err(wrong_input(est)),
    }
}

fn resampled_estimate(data: InputData<'_>, spec: &ModelSpec, est: Estimator, idx: &[usize]) -> Result<AttSeries> {
    match data {
        InputData::Panel(d) => point_estimate(InputData::Panel(&d.resample(idx)?), spec, est),
        InputData::Rc(d) => point_estimate(InputData::Rc(&d.resample(idx)?), spec, est),
        InputData::Tv(d) => point_estimate(InputData::Tv(&d.resample(idx)?), spec, est),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BootstrapResult {
    pub periods: Vec<usize>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub percentile_ci: Vec<(f64, f64)>,
    pub normal_ci: Vec<(f64, f64)>,
    pub replications: usize,
    pub failed: usize,
    /// Successful replication draws, one row per replication.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

impl BootstrapResult {
    /// Sample covariance of the replication draws (finite-sample scale).
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.periods.len();
        let b = self.draws.len();
        let mean = DVector::from_fn(k, |j, _| self.draws.iter().map(|r| r[j]).sum::<f64>() / b as f64);
        let mut cov = DMatrix::zeros(k, k);
        for r in &self.draws {
            let dv = DVector::from_column_slice(r) - &mean;
            cov += &dv * dv.transpose();
        }
        cov / (b.max(2) - 1) as f64
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Index draws for replication `r`: uniform over all units, or within each
/// stratum when `strata` labels are given.
pub(crate) fn draw_indices(n: usize, seed: u64, r: u64, strata: Option<&[Vec<usize>]>) -> Vec<usize> {
    let mut rng = replication_rng(seed, r);
    match strata {
        None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        Some(groups) => groups
            .iter()
            .flat_map(|g| {
                (0..g.len())
                    .map(|_| g[rng.random_range(0..g.len())])
                    .collect::<Vec<_>>()
            })
            .collect(),
    }
}

/// Runs `b` replications of `stat` and summarizes them around `estimate`.
pub(crate) fn bootstrap_with<F>(
    n: usize,
    b: usize,
    seed: u64,
    strata: Option<&[Vec<usize>]>,
    estimate: Vec<f64>,
    periods: Vec<usize>,
    stat: F,
) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if b < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATIONS} replications, got {b}"
        )));
    }
    let k = estimate.len();
    let raw: Vec<Option<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let idx = draw_indices(n, seed, r, strata);
            stat(&idx)
                .ok()
                .filter(|v| v.len() == k && v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let draws: Vec<Vec<f64>> = raw.into_iter().flatten().collect();
    let failed = b - draws.len();
    if failed as f64 > MAX_FAILURE_SHARE * b as f64 {
        return Err(Error::TooManyFailures { failed, total: b });
    }
    let mut se = Vec::with_capacity(k);
    let mut percentile_ci = Vec::with_capacity(k);
    let mut normal_ci = Vec::with_capacity(k);
    for j in 0..k {
        let mut col: Vec<f64> = draws.iter().map(|r| r[j]).collect();
        let m = col.len() as f64;
        let mean = col.iter().sum::<f64>() / m;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        col.sort_by(f64::total_cmp);
        se.push(sd);
        percentile_ci.push((quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975)));
        normal_ci.push(normal_ci_95(estimate[j], sd));
    }
    Ok(BootstrapResult {
        periods,
        estimate,
        se,
        percentile_ci,
        normal_ci,
        replications: b,
        failed,
        draws,
    })
}

/// Two-sided 95% normal interval `estimate ± z₀.₉₇₅·se`.
pub fn normal_ci_95(estimate: f64, se: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(0.975);
    (estimate - z * se, estimate + z * se)
}

/// Nonparametric bootstrap of the ATT series: units are resampled for panels
/// (all periods together), rows for repeated cross sections.
pub fn bootstrap_att(
    data: InputData<'_>,
    spec: &ModelSpec,
    est: Estimator,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let point = point_estimate(data, spec, est)?;
    bootstrap_with(
        data.n(),
        b,
        seed,
        None,
        point.att.clone(),
        point.periods.clone(),
        |idx| {
            let s = resampled_estimate(data, spec, est, idx)?;
            if s.periods != point.periods {
                return Err(Error::InvalidData("periods changed under resampling".into()));
            }
            Ok(s.att)
        },
    )
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Wald statistic `a' V⁺ a` for a vector `a` with covariance `v` of the
/// estimator itself; `dof` is the rank of `v`.
pub fn wald_from_cov(a: &DVector<f64>, v: &DMatrix<f64>) -> Result<WaldTest> {
    let (pinv, rank) = psd_inverse(v, WALD_RTOL)?;
    let statistic = (a.transpose() * pinv * a)[(0, 0)].max(0.0);
    Ok(WaldTest {
        statistic,
        dof: rank,
        p_value: chi2_sf(statistic, rank),
    })
}

/// Joint test that every pre-period ATT is zero:
/// `W = n a' C⁺ a` with `C` the asymptotic joint covariance.
pub fn pretest_wald(series: &AttSeries) -> Result<WaldTest> {
    let pre: Vec<usize> = series
        .pre_periods()
        .iter()
        .filter_map(|&t| series.index_of(t))
        .collect();
    if pre.is_empty() {
        return Err(Error::NoPrePeriods);
    }
    let cov = series.joint_cov.as_ref().ok_or_else(|| {
        Error::InvalidArgument("pre-test needs the joint covariance of the ATT series".into())
    })?;
    let a = DVector::from_iterator(pre.len(), pre.iter().map(|&i| series.att[i]));
    let c = DMatrix::from_fn(pre.len(), pre.len(), |r, s| cov[(pre[r], pre[s])]);
    wald_from_cov(&a, &(c / series.n as f64))
}

/// Pre-test with a bootstrap covariance (for estimators without analytic
/// variances).
pub fn pretest_wald_bootstrap(series: &AttSeries, boot: &BootstrapResult) -> Result<WaldTest> {
    let pre: Vec<usize> = series
        .pre_periods()
        .iter()
        .filter_map(|&t| boot.periods.iter().position(|&p| p == t))
        .collect();
    if pre.is_empty() {
        return Err(Error::NoPrePeriods);
    }
    let cov = boot.covariance();
    let a = DVector::from_iterator(pre.len(), pre.iter().map(|&i| boot.estimate[i]));
    let c = DMatrix::from_fn(pre.len(), pre.len(), |r, s| cov[(pre[r], pre[s])]);
    wald_from_cov(&a, &c)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OverIdReport {
    pub j_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub label: Option<String>,
}

pub fn overid_report(fit: &GmmFit) -> OverIdReport {
    OverIdReport {
        j_stat: fit.j_stat,
        dof: fit.j_dof,
        p_value: fit.j_pvalue(),
        label: (fit.j_dof == 0).then(|| "exactly identified".to_string()),
    }
}
