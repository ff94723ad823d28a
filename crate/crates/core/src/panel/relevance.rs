use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::data::PanelDataset;
use super::estimate::panel_units;
use super::stack::ModelSpec;
use crate::error::Result;
use crate::gmm::{numerical_rank, singular_values, MomentSystem, RANK_RTOL};

/// First-stage F statistics below this value are flagged as weak.
pub const WEAK_F_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FirstStageCoef {
    pub name: String,
    pub is_w: bool,
    pub coef: f64,
    /// `None` when the first-stage design is rank deficient.
    pub se: Option<f64>,
}

/// Relevance diagnostics for the `(β, F)` block of `E[ZX']`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RelevanceReport {
    pub rank: usize,
    pub required: usize,
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
    pub rank_deficient: bool,
    /// Projection of `Y_2 - Y_1` on all covariates among untreated units.
    pub first_stage: Vec<FirstStageCoef>,
    /// Joint F statistic for the W coefficients; `None` if not computable.
    pub w_f_stat: Option<f64>,
    pub w_f_pvalue: Option<f64>,
    pub weak: bool,
}

pub fn check_relevance(data: &PanelDataset, spec: &ModelSpec) -> Result<RelevanceReport> {
    let dims = spec.dims_for(data)?;
    let system = MomentSystem::from_units(panel_units(data, spec, &dims))?;
    let block = system.mzx().view((0, 0), (dims.m, dims.l)).into_owned();
    let sv = singular_values(&block);
    let rank = numerical_rank(&block, RANK_RTOL);
    let condition_number = match (sv.first(), sv.get(dims.l - 1)) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };

    let untreated: Vec<usize> = (0..data.n()).filter(|&i| !data.d()[i]).collect();
    let x = data.z().select_rows(&untreated);
    let y = DVector::from_iterator(
        untreated.len(),
        untreated
            .iter()
            .map(|&i| data.outcome(i, 2) - data.outcome(i, 1)),
    );
    let (first_stage, w_f_stat) = first_stage(&x, &y, spec, data.covariate_names());
    let df2 = untreated.len().saturating_sub(data.k());
    let w_f_pvalue = w_f_stat.and_then(|f| {
        let dist = FisherSnedecor::new(spec.w_cols.len() as f64, df2 as f64).ok()?;
        Some(dist.sf(f))
    });
    let rank_deficient = rank < dims.l;
    let weak = rank_deficient || w_f_stat.is_none_or(|f| f < WEAK_F_THRESHOLD);
    Ok(RelevanceReport {
        rank,
        required: dims.l,
        singular_values: sv,
        condition_number,
        rank_deficient,
        first_stage,
        w_f_stat,
        w_f_pvalue,
        weak,
    })
}

fn first_stage(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &ModelSpec,
    names: &[String],
) -> (Vec<FirstStageCoef>, Option<f64>) {
    let (n, k) = x.shape();
    let full_rank = n > k && numerical_rank(x, RANK_RTOL) == k;
    let coef = x
        .clone()
        .svd(true, true)
        .solve(y, RANK_RTOL * singular_values(x).first().copied().unwrap_or(0.0))
        .unwrap_or_else(|_| DVector::zeros(k));
    let mut cov = None;
    if full_rank {
        let resid = y - x * &coef;
        let s2 = resid.norm_squared() / (n - k) as f64;
        let xtx = x.transpose() * x;
        if let Some(inv) = xtx.cholesky().map(|c| c.inverse()) {
            cov = Some(inv * s2);
        }
    }
    let coefs = (0..k)
        .map(|j| FirstStageCoef {
            name: names[j].clone(),
            is_w: spec.w_cols.contains(&j),
            coef: coef[j],
            se: cov.as_ref().map(|c: &DMatrix<f64>| c[(j, j)].max(0.0).sqrt()),
        })
        .collect();
    let f_stat = cov.and_then(|c| {
        let w = &spec.w_cols;
        let b = DVector::from_iterator(w.len(), w.iter().map(|&j| coef[j]));
        let v = DMatrix::from_fn(w.len(), w.len(), |a, bb| c[(w[a], w[bb])]);
        let chol = v.cholesky()?;
        let stat = b.dot(&chol.solve(&b)) / w.len() as f64;
        stat.is_finite().then_some(stat)
    });
    (coefs, f_stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let n = 40;
        let y = DMatrix::from_fn(n, 3, |i, t| ((i * 7 + t * 3) % 11) as f64 + t as f64 * (i % 3) as f64);
        let z = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            _ => (i % 3) as f64,
        });
        let d = (0..n).map(|i| i % 4 == 0).collect();
        let data = PanelDataset::new(y, z, d, 3).unwrap();
        let report = check_relevance(&data, &ModelSpec::new(vec![0], vec![1, 2])).unwrap();
        assert!(report.rank_deficient || report.weak);
        assert!(report.first_stage.iter().all(|c| c.se.is_none()));
        assert!(report.w_f_stat.is_none());
    }
}
