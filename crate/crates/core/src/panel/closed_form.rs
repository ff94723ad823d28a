//! Three-period closed forms used as oracles for the GMM estimator.

use super::data::PanelDataset;
use crate::error::{Error, Result};

const DENOM_RTOL: f64 = 1e-10;

fn require_three_periods(data: &PanelDataset) -> Result<()> {
    if data.t_total() != 3 || data.t_star() != 3 {
        return Err(Error::SpecMismatch(format!(
            "closed forms need T = 3 and t* = 3, got T = {}, t* = {}",
            data.t_total(),
            data.t_star()
        )));
    }
    Ok(())
}

fn long_diff(data: &PanelDataset, i: usize) -> f64 {
    data.outcome(i, 3) - data.outcome(i, 1)
}

fn short_diff(data: &PanelDataset, i: usize) -> f64 {
    data.outcome(i, 2) - data.outcome(i, 1)
}

fn group_means(data: &PanelDataset, treated: bool) -> Result<(f64, f64)> {
    let l = data
        .group_mean(treated, |i| long_diff(data, i))
        .ok_or_else(|| Error::InvalidData("empty treatment group".into()))?;
    let s = data.group_mean(treated, |i| short_diff(data, i)).unwrap();
    Ok((l, s))
}

fn check_denominator(den: f64, scale: f64, what: &'static str) -> Result<()> {
    if !den.is_finite() || den.abs() <= DENOM_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroDenominator(what));
    }
    Ok(())
}

fn abs_scale(data: &PanelDataset) -> f64 {
    let n = data.n() as f64;
    (0..data.n()).map(|i| short_diff(data, i).abs()).sum::<f64>() / n
}

/// Intercept-only model with the intercept in the time-invariant set:
/// returns `(F_3, ATT_3)`.
pub fn closed_form_example1(data: &PanelDataset) -> Result<(f64, f64)> {
    require_three_periods(data)?;
    let (l0, s0) = group_means(data, false)?;
    let (l1, s1) = group_means(data, true)?;
    check_denominator(s0, abs_scale(data), "E[Y2 - Y1 | D = 0]")?;
    let f3 = l0 / s0;
    Ok((f3, l1 - f3 * s1))
}

/// `Z = (1, W)` with binary `W` (column 1) and the intercept in the X set:
/// returns `(F_3, θ_3, ATT_3)`.
pub fn closed_form_example2(data: &PanelDataset) -> Result<(f64, f64, f64)> {
    require_three_periods(data)?;
    if data.k() != 2 {
        return Err(Error::SpecMismatch(
            "closed form needs covariates (intercept, W)".into(),
        ));
    }
    let w = |i: usize| data.z()[(i, 1)];
    if (0..data.n()).any(|i| w(i) != 0.0 && w(i) != 1.0) {
        return Err(Error::InvalidData("W must be binary".into()));
    }
    let cell = |wv: f64| -> Result<(f64, f64)> {
        let idx: Vec<usize> = (0..data.n())
            .filter(|&i| !data.d()[i] && w(i) == wv)
            .collect();
        if idx.is_empty() {
            return Err(Error::MissingWCell(wv as u8));
        }
        let c = idx.len() as f64;
        let l = idx.iter().map(|&i| long_diff(data, i)).sum::<f64>() / c;
        let s = idx.iter().map(|&i| short_diff(data, i)).sum::<f64>() / c;
        Ok((l, s))
    };
    let (l_w0, s_w0) = cell(0.0)?;
    let (l_w1, s_w1) = cell(1.0)?;
    let den = s_w0 - s_w1;
    check_denominator(den, abs_scale(data), "E[Y2 - Y1 | W = 0, D = 0] - E[Y2 - Y1 | W = 1, D = 0]")?;
    let f3 = (l_w0 - l_w1) / den;
    let theta3 = l_w0 - f3 * s_w0;
    let (l1, s1) = group_means(data, true)?;
    Ok((f3, theta3, l1 - (theta3 + f3 * s1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn from_rows(rows: &[([f64; 3], bool, f64)]) -> PanelDataset {
        let n = rows.len();
        let y = DMatrix::from_fn(n, 3, |i, t| rows[i].0[t]);
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { rows[i].2 });
        let d = rows.iter().map(|r| r.1).collect();
        PanelDataset::new(y, z, d, 3).unwrap()
    }

    #[test]
    fn example1_parallel_and_linear_trends() {
        let data = from_rows(&[
            ([0.0, 1.0, 1.0], false, 0.0),
            ([0.0, 1.0, 3.0], true, 0.0),
        ]);
        let (f3, att) = closed_form_example1(&data).unwrap();
        assert_eq!(f3, 1.0);
        assert_eq!(att, 2.0);

        let data = from_rows(&[
            ([0.0, 1.0, 2.0], false, 0.0),
            ([0.0, 1.0, 2.0], true, 0.0),
        ]);
        let (f3, att) = closed_form_example1(&data).unwrap();
        assert_eq!(f3, 2.0);
        assert_eq!(att, 0.0);
    }

    #[test]
    fn example1_zero_denominator() {
        let data = from_rows(&[
            ([1.0, 1.0, 2.0], false, 0.0),
            ([0.0, 1.0, 2.0], true, 0.0),
        ]);
        assert_eq!(
            closed_form_example1(&data),
            Err(Error::ZeroDenominator("E[Y2 - Y1 | D = 0]"))
        );
    }

    #[test]
    fn example2_hand_cell_means() {
        // Untreated cells: W=0 short 1 long 2; W=1 short 2 long 4.
        let data = from_rows(&[
            ([0.0, 1.0, 2.0], false, 0.0),
            ([1.0, 2.0, 3.0], false, 0.0),
            ([0.0, 2.0, 4.0], false, 1.0),
            ([0.0, 1.0, 5.0], true, 1.0),
        ]);
        let (f3, theta3, att) = closed_form_example2(&data).unwrap();
        assert!((f3 - 2.0).abs() < 1e-15);
        assert!(theta3.abs() < 1e-15);
        assert!((att - 3.0).abs() < 1e-15);
    }

    #[test]
    fn example2_degenerate_cells() {
        let same = from_rows(&[
            ([0.0, 1.0, 2.0], false, 0.0),
            ([0.0, 1.0, 3.0], false, 1.0),
            ([0.0, 1.0, 5.0], true, 1.0),
        ]);
        assert!(matches!(closed_form_example2(&same), Err(Error::ZeroDenominator(_))));
        let missing = from_rows(&[
            ([0.0, 1.0, 2.0], false, 0.0),
            ([0.0, 1.0, 5.0], true, 1.0),
        ]);
        assert_eq!(closed_form_example2(&missing), Err(Error::MissingWCell(1)));
    }
}
