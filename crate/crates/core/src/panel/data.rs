use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Balanced panel: outcomes for `n` units over `T` periods, time-invariant
/// covariates with a leading intercept column, and a treated-group flag.
///
/// Periods are 1-indexed in the public API; `t_star` is the first period in
/// which the treated group is treated.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    d: Vec<bool>,
    t_star: usize,
    covariate_names: Vec<String>,
}

impl PanelDataset {
    /// Validates and builds a panel. `z` must carry the intercept in column 0.
    pub fn new(y: DMatrix<f64>, z: DMatrix<f64>, d: Vec<bool>, t_star: usize) -> Result<Self> {
        let names = default_names(z.ncols());
        Self::with_names(y, z, d, t_star, names)
    }

    pub fn with_names(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        d: Vec<bool>,
        t_star: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let data = Self::from_parts(y, z, d, t_star, covariate_names)?;
        let treated = data.n_treated();
        if treated == 0 || treated == data.n() {
            return Err(Error::InvalidData(
                "panel needs at least one treated and one untreated unit".into(),
            ));
        }
        Ok(data)
    }

    /// Shape and value checks only; group composition is not enforced, so
    /// bootstrap resamples can reach the estimator's own degeneracy errors.
    pub(crate) fn from_parts(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        d: Vec<bool>,
        t_star: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.nrows();
        let t_total = y.ncols();
        if n == 0 {
            return Err(Error::InvalidData("panel has no units".into()));
        }
        if z.nrows() != n || d.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, z has {}, d has {}",
                z.nrows(),
                d.len()
            )));
        }
        if covariate_names.len() != z.ncols() {
            return Err(Error::DimensionMismatch(
                "one name per covariate column required".into(),
            ));
        }
        if t_total < 3 {
            return Err(Error::InvalidData(format!(
                "need at least 3 periods, got {t_total}"
            )));
        }
        if !(3..=t_total).contains(&t_star) {
            return Err(Error::InvalidData(format!(
                "first treatment period {t_star} must lie in 3..={t_total}"
            )));
        }
        if z.ncols() == 0 || z.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidData(
                "covariate column 0 must be an all-ones intercept".into(),
            ));
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("panel data"));
        }
        Ok(Self {
            y,
            z,
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

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Outcome of unit `i` in 1-indexed period `t`.
    pub fn outcome(&self, i: usize, t: usize) -> f64 {
        self.y[(i, t - 1)]
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&d| d).count()
    }

    /// Units drawn by index, with repetition allowed.
    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        let y = self.y.select_rows(idx);
        let z = self.z.select_rows(idx);
        let d = idx.iter().map(|&i| self.d[i]).collect();
        Self::from_parts(y, z, d, self.t_star, self.covariate_names.clone())
    }

    /// Same units with a different treated flag and first treatment period.
    pub fn with_treatment(&self, d: Vec<bool>, t_star: usize) -> Result<Self> {
        Self::with_names(
            self.y.clone(),
            self.z.clone(),
            d,
            t_star,
            self.covariate_names.clone(),
        )
    }

    /// Mean of `f(unit)` over units with `D = treated`.
    pub(crate) fn group_mean(&self, treated: bool, f: impl Fn(usize) -> f64) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.n() {
            if self.d[i] == treated {
                sum += f(i);
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

pub(crate) fn default_names(k: usize) -> Vec<String> {
    (0..k)
        .map(|j| {
            if j == 0 {
                "intercept".to_string()
            } else {
                format!("z{j}")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (DMatrix<f64>, DMatrix<f64>, Vec<bool>) {
        let y = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 1.0, 1.5, 3.0]);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 1.0, -0.2]);
        (y, z, vec![false, true])
    }

    #[test]
    fn valid_panel() {
        let (y, z, d) = tiny();
        let p = PanelDataset::new(y, z, d, 3).unwrap();
        assert_eq!((p.n(), p.t_total(), p.k()), (2, 3, 2));
        assert_eq!(p.outcome(1, 3), 3.0);
        assert_eq!(p.covariate_names(), &["intercept", "z1"]);
    }

    #[test]
    fn rejects_bad_timing_and_groups() {
        let (y, z, d) = tiny();
        assert!(PanelDataset::new(y.clone(), z.clone(), d.clone(), 2).is_err());
        assert!(PanelDataset::new(y.clone(), z.clone(), d, 4).is_err());
        assert!(PanelDataset::new(y.clone(), z.clone(), vec![true, true], 3).is_err());
        let mut z2 = z.clone();
        z2[(1, 0)] = 2.0;
        assert!(PanelDataset::new(y.clone(), z2, vec![false, true], 3).is_err());
        let y2 = y.columns(0, 2).into_owned();
        assert!(PanelDataset::new(y2, z, vec![false, true], 3).is_err());
    }
}
