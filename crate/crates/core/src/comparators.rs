//! Difference-in-differences and linear-trend comparators with their
//! analytic biases under the interactive-fixed-effects model.

use serde::Serialize;

use crate::att::AttSeries;
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

fn check_period(data: &PanelDataset, t: usize) -> Result<()> {
    if (3..=data.t_total()).contains(&t) {
        Ok(())
    } else {
        Err(Error::BadPeriod(t))
    }
}

fn group_gap(data: &PanelDataset, f: impl Fn(usize) -> f64) -> Result<f64> {
    let treated = data.group_mean(true, &f);
    let untreated = data.group_mean(false, &f);
    match (treated, untreated) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => Err(Error::InvalidData("both treatment groups must be present".into())),
    }
}

/// DID relative to period 2: `(Ȳ_t - Ȳ_2 | D=1) - (Ȳ_t - Ȳ_2 | D=0)`.
pub fn did_att(data: &PanelDataset, t: usize) -> Result<f64> {
    check_period(data, t)?;
    group_gap(data, |i| data.outcome(i, t) - data.outcome(i, 2))
}

/// Linear-trend estimator using `Δ²Y_t = Y_t - 2Y_{t-1} + Y_{t-2}`.
pub fn lt_att(data: &PanelDataset, t: usize) -> Result<f64> {
    check_period(data, t)?;
    group_gap(data, |i| {
        data.outcome(i, t) - 2.0 * data.outcome(i, t - 1) + data.outcome(i, t - 2)
    })
}

/// Series over `t = 3..T` for either comparator (no analytic variance).
pub fn comparator_series(
    data: &PanelDataset,
    f: fn(&PanelDataset, usize) -> Result<f64>,
) -> Result<AttSeries> {
    let periods: Vec<usize> = (3..=data.t_total()).collect();
    let att = periods
        .iter()
        .map(|&t| f(data, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttSeries::new(data.t_star(), data.n(), periods, att))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasOracleInputs {
    pub f_t: f64,
    /// `E[λ | D=1] - E[λ | D=0]`.
    pub lambda_gap: f64,
}

/// Asymptotic bias of DID: `(F_t - 1) · gap`.
pub fn did_bias_oracle(inp: BiasOracleInputs) -> f64 {
    (inp.f_t - 1.0) * inp.lambda_gap
}

/// Asymptotic bias of the linear-trend estimator: `(F_t - 2) · gap`.
pub fn lt_bias_oracle(inp: BiasOracleInputs) -> f64 {
    (inp.f_t - 2.0) * inp.lambda_gap
}
