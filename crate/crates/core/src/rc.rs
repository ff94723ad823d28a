//! Repeated cross sections: every row is a draw from the period mixture, and
//! moments replace `Y_t` with `1{T=t} Y / π_t`.

use nalgebra::DMatrix;

use crate::att::AttSeries;
use crate::error::{Error, Result};
use crate::gmm::UnitBlock;
use crate::panel::{
    default_names, fit_stacked, series_from_fit, stacked_block, ModelSpec, PanelDataset,
    PanelFit, StackDims,
};

/// Pooled rows `(y, z, d, t)` with periods labelled `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RcDataset {
    y: Vec<f64>,
    z: DMatrix<f64>,
    d: Vec<bool>,
    t: Vec<usize>,
    t_total: usize,
    t_star: usize,
    covariate_names: Vec<String>,
}

impl RcDataset {
    pub fn new(
        y: Vec<f64>,
        z: DMatrix<f64>,
        d: Vec<bool>,
        t: Vec<usize>,
        t_total: usize,
        t_star: usize,
    ) -> Result<Self> {
        let names = default_names(z.ncols());
        Self::with_names(y, z, d, t, t_total, t_star, names)
    }

    pub fn with_names(
        y: Vec<f64>,
        z: DMatrix<f64>,
        d: Vec<bool>,
        t: Vec<usize>,
        t_total: usize,
        t_star: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if z.nrows() != n || d.len() != n || t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} outcomes but {} covariate rows, {} flags, {} periods",
                z.nrows(),
                d.len(),
                t.len()
            )));
        }
        if covariate_names.len() != z.ncols() {
            return Err(Error::DimensionMismatch(
                "one name per covariate column required".into(),
            ));
        }
        if t_total < 3 || !(3..=t_total).contains(&t_star) {
            return Err(Error::InvalidData(format!(
                "timing T={t_total}, t*={t_star} violates T >= 3 and 3 <= t* <= T"
            )));
        }
        if let Some(&bad) = t.iter().find(|&&s| s == 0 || s > t_total) {
            return Err(Error::BadPeriodLabels(format!(
                "period {bad} outside 1..={t_total}"
            )));
        }
        if z.ncols() == 0 || z.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidData(
                "covariate column 0 must be an all-ones intercept".into(),
            ));
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("cross-section data"));
        }
        let data = Self {
            y,
            z,
            d,
            t,
            t_total,
            t_star,
            covariate_names,
        };
        if let Some(s) = data.period_counts().iter().position(|&c| c == 0) {
            return Err(Error::EmptyPeriod(s + 1));
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn t_star(&self) -> usize {
        self.t_star
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn periods(&self) -> &[usize] {
        &self.t
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Row counts `n_t` for `t = 1..=T` (index `t - 1`).
    pub fn period_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.t_total];
        for &s in &self.t {
            counts[s - 1] += 1;
        }
        counts
    }

    /// Rows drawn by index with repetition; periods may end up empty.
    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        Self::with_names(
            idx.iter().map(|&i| self.y[i]).collect(),
            self.z.select_rows(idx),
            idx.iter().map(|&i| self.d[i]).collect(),
            idx.iter().map(|&i| self.t[i]).collect(),
            self.t_total,
            self.t_star,
            self.covariate_names.clone(),
        )
    }

    /// Every unit of a balanced panel observed in every period.
    pub fn explode_panel(data: &PanelDataset) -> Result<Self> {
        let t_total = data.t_total();
        let rows: Vec<(usize, usize)> = (0..data.n())
            .flat_map(|i| (1..=t_total).map(move |t| (i, t)))
            .collect();
        let unit_idx: Vec<usize> = rows.iter().map(|&(i, _)| i).collect();
        Self::with_names(
            rows.iter().map(|&(i, t)| data.outcome(i, t)).collect(),
            data.z().select_rows(&unit_idx),
            rows.iter().map(|&(i, _)| data.d()[i]).collect(),
            rows.iter().map(|&(_, t)| t).collect(),
            t_total,
            data.t_star(),
            data.covariate_names().to_vec(),
        )
    }
}

/// Period sampling shares `π_t = P(T = t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiShares {
    pub pi: Vec<f64>,
}

impl PiShares {
    pub fn get(&self, t: usize) -> f64 {
        self.pi[t - 1]
    }
}

/// `π̂_t = n_t / n`.
pub fn estimate_pi(data: &RcDataset) -> Result<PiShares> {
    let counts = data.period_counts();
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyPeriod(s + 1));
    }
    let n = data.n() as f64;
    Ok(PiShares {
        pi: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

fn rc_block(data: &RcDataset, i: usize, pi: &PiShares, spec: &ModelSpec, dims: &StackDims) -> UnitBlock {
    let mut outcomes = vec![0.0; data.t_total];
    let s = data.t[i];
    outcomes[s - 1] = data.y[i] / pi.get(s);
    let z: Vec<f64> = data.z.row(i).iter().copied().collect();
    stacked_block(&outcomes, &z, data.d[i], spec, dims)
}

/// One row's contribution to the stacked mixture moments.
pub fn build_rc_unit(data: &RcDataset, i: usize, pi: &PiShares, spec: &ModelSpec) -> Result<UnitBlock> {
    let dims = spec.dims(data.t_total, data.t_star, data.k())?;
    Ok(rc_block(data, i, pi, spec, &dims))
}

/// Fitted RC system: the GMM fit over rows and the ATT series.
///
/// The series carries no analytic variance because `Σ̂` ignores the
/// estimation error in `π̂`; use the row bootstrap for inference.
#[derive(Debug, Clone)]
pub struct RcFit {
    pub panel_fit: PanelFit,
    pub pi: PiShares,
    pub series: AttSeries,
}

pub fn estimate_att_rc(data: &RcDataset, spec: &ModelSpec) -> Result<RcFit> {
    let dims = spec.dims(data.t_total, data.t_star, data.k())?;
    let pi = estimate_pi(data)?;
    for t in 1..=data.t_total {
        for d in [false, true] {
            if !(0..data.n()).any(|i| data.t[i] == t && data.d[i] == d) {
                return Err(Error::EmptyCell { d: d as u8, t });
            }
        }
    }
    let units = (0..data.n())
        .map(|i| rc_block(data, i, &pi, spec, &dims))
        .collect();
    let panel_fit = fit_stacked(units, dims)?;
    let mut series = series_from_fit(&panel_fit.params, &panel_fit.fit, data.t_star, data.n())?;
    series.variance = None;
    series.joint_cov = None;
    Ok(RcFit {
        panel_fit,
        pi,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(t: &[usize]) -> RcDataset {
        let n = t.len();
        RcDataset::new(
            (0..n).map(|i| i as f64 + 1.0).collect(),
            DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i % 2) as f64 }),
            (0..n).map(|i| i % 3 == 0).collect(),
            t.to_vec(),
            3,
            3,
        )
        .unwrap()
    }

    #[test]
    fn shares() {
        let data = rows(&[1, 2, 3, 1, 2, 3]);
        assert_eq!(estimate_pi(&data).unwrap().pi, vec![1.0 / 3.0; 3]);
        let mut t = vec![1; 100];
        t.extend(vec![2; 300]);
        t.extend(vec![3; 600]);
        let pi = estimate_pi(&rows(&t)).unwrap().pi;
        assert_eq!(pi, vec![0.1, 0.3, 0.6]);
        assert_eq!(pi.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_period_rejected() {
        let err = RcDataset::new(vec![1.0], DMatrix::from_element(1, 1, 1.0), vec![false], vec![1], 3, 3);
        assert_eq!(err, Err(Error::EmptyPeriod(2)));
    }

    #[test]
    fn indicator_algebra() {
        let data = rows(&[1, 2, 3, 3, 2, 1]);
        let pi = estimate_pi(&data).unwrap();
        let spec = ModelSpec::new(vec![0], vec![1]);
        // Row 5 is untreated, period 1, y = 6.
        let b = build_rc_unit(&data, 5, &pi, &spec).unwrap();
        let v = 6.0 / pi.get(1);
        assert_eq!(b.y[0], -v);
        assert_eq!(b.x[(0, 1)], -v);
        // Row 1 is untreated, period 2, y = 2: only the short difference moves.
        let b = build_rc_unit(&data, 1, &pi, &spec).unwrap();
        assert_eq!(b.y[0], 0.0);
        assert_eq!(b.x[(0, 1)], 2.0 / pi.get(2));
    }
}
