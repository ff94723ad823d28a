//! Period-indexed ATT estimates shared by every estimator.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::gmm::standard_error;

/// ATT estimates for periods `3..=T` with optional asymptotic inference.
///
/// Variances are asymptotic, i.e. of `√n(ATT̂_t - ATT_t)`; use [`AttSeries::se`]
/// for standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttSeries {
    pub periods: Vec<usize>,
    pub att: Vec<f64>,
    pub variance: Option<Vec<f64>>,
    pub joint_cov: Option<DMatrix<f64>>,
    pub t_star: usize,
    pub n: usize,
}

/// Flat record form of one period's estimate.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AttPoint {
    pub period: usize,
    pub att: f64,
    pub se: Option<f64>,
    pub pre: bool,
}

impl AttSeries {
    pub fn new(t_star: usize, n: usize, periods: Vec<usize>, att: Vec<f64>) -> Self {
        debug_assert_eq!(periods.len(), att.len());
        Self {
            periods,
            att,
            variance: None,
            joint_cov: None,
            t_star,
            n,
        }
    }

    pub fn with_covariance(mut self, joint_cov: DMatrix<f64>) -> Self {
        let variance = joint_cov.diagonal().iter().map(|v| v.max(0.0)).collect();
        self.variance = Some(variance);
        self.joint_cov = Some(joint_cov);
        self
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.index_of(t).map(|i| self.att[i])
    }

    pub fn variance_at(&self, t: usize) -> Option<f64> {
        let i = self.index_of(t)?;
        self.variance.as_ref().map(|v| v[i])
    }

    pub fn se(&self, t: usize) -> Option<f64> {
        self.variance_at(t).map(|v| standard_error(v, self.n))
    }

    pub fn index_of(&self, t: usize) -> Option<usize> {
        self.periods.iter().position(|&p| p == t)
    }

    pub fn pre_periods(&self) -> Vec<usize> {
        self.periods.iter().copied().filter(|&t| t < self.t_star).collect()
    }

    pub fn post_periods(&self) -> Vec<usize> {
        self.periods.iter().copied().filter(|&t| t >= self.t_star).collect()
    }

    pub fn points(&self) -> Vec<AttPoint> {
        self.periods
            .iter()
            .zip(&self.att)
            .map(|(&t, &a)| AttPoint {
                period: t,
                att: a,
                se: self.se(t),
                pre: t < self.t_star,
            })
            .collect()
    }
}
