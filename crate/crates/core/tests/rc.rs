mod common;

use common::*;
use ife_att::error::Error;
use ife_att::gmm::MomentSystem;
use ife_att::panel::{build_stacked_unit, estimate_att};
use ife_att::rc::{build_rc_unit, estimate_att_rc, estimate_pi, RcDataset};
use ife_att::ModelSpec;
use nalgebra::DMatrix;

fn spec_w() -> ModelSpec {
    ModelSpec::new(vec![0], vec![1])
}

fn rc_system(rc: &RcDataset, spec: &ModelSpec) -> MomentSystem {
    let pi = estimate_pi(rc).unwrap();
    MomentSystem::from_units((0..rc.n()).map(|i| build_rc_unit(rc, i, &pi, spec).unwrap()).collect()).unwrap()
}

#[test]
fn exploded_panel_reproduces_panel_moments() {
    let data = draw(&dgp(300, vec![0.0, 0.0, 1.0, 2.0, 2.5], vec![0.0, 1.0, 1.5, 2.0, 2.5], 4, 0.8), 6, 0);
    let spec = spec_w();
    let rc = RcDataset::explode_panel(&data).unwrap();
    let panel = MomentSystem::from_units(
        (0..data.n())
            .map(|i| build_stacked_unit(&data, i, &spec).unwrap())
            .collect(),
    )
    .unwrap();
    let rows = rc_system(&rc, &spec);
    assert!((panel.mzx() - rows.mzx()).amax() < 1e-8);
    assert!((panel.mzy() - rows.mzy()).amax() < 1e-8);
}

#[test]
fn exploded_panel_matches_exactly_identified_estimates() {
    let data = draw(&table_dgp(500, 1.5, 0.7), 7, 0);
    let (_, panel) = estimate_att(&data, &spec_w()).unwrap();
    let rc = estimate_att_rc(&RcDataset::explode_panel(&data).unwrap(), &spec_w()).unwrap();
    assert!((panel.get(3).unwrap() - rc.series.get(3).unwrap()).abs() < 1e-8);
    assert!(rc.series.variance.is_none() && rc.series.joint_cov.is_none());
}

#[test]
fn duplicating_every_row_changes_nothing() {
    let data = draw(&dgp(400, vec![0.0, 0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5, 2.0], 4, 0.8), 8, 0);
    let rc = cross_sections(&data, &mut rng(1));
    let idx: Vec<usize> = (0..rc.n()).chain(0..rc.n()).collect();
    let doubled = rc.resample(&idx).unwrap();
    let a = estimate_att_rc(&rc, &spec_w()).unwrap();
    let b = estimate_att_rc(&doubled, &spec_w()).unwrap();
    for (x, y) in a.series.att.iter().zip(&b.series.att) {
        assert!(rel_close(*x, *y, 1e-9), "{x} vs {y}");
    }
    assert_eq!(a.pi, b.pi);
}

#[test]
fn row_order_is_irrelevant() {
    let data = draw(&table_dgp(900, 2.0, 1.0), 9, 0);
    let rc = cross_sections(&data, &mut rng(2));
    let idx: Vec<usize> = (0..rc.n()).rev().collect();
    let a = estimate_att_rc(&rc, &spec_w()).unwrap();
    let b = estimate_att_rc(&rc.resample(&idx).unwrap(), &spec_w()).unwrap();
    assert!(rel_close(a.series.get(3).unwrap(), b.series.get(3).unwrap(), 1e-10));
}

#[test]
fn genuine_cross_sections_recover_effect() {
    // One draw has a standard deviation near 0.11 here, so average 20.
    let dgp = table_dgp(30_000, 1.0, 1.0);
    let est: Vec<f64> = (0..20)
        .map(|rep| {
            let mut r = ife_att::simulation::replication_rng(10, rep);
            let data = dgp.generate(&mut r).unwrap();
            let rc = cross_sections(&data, &mut r);
            let fit = estimate_att_rc(&rc, &spec_w()).unwrap();
            for t in 1..=3 {
                assert!((fit.pi.get(t) - 1.0 / 3.0).abs() < 0.02);
            }
            fit.series.get(3).unwrap()
        })
        .collect();
    let m = mean(&est);
    assert!((m - 1.0).abs() < 0.15, "mean ATT3 = {m}");
    assert!((m - 1.0).abs() < 4.0 * sd(&est) / 20f64.sqrt());
}

#[test]
fn no_period_change_gives_zero_att() {
    // Balanced cells; only the short difference moves, with W.
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut d = Vec::new();
    let mut t = Vec::new();
    for dv in [false, true] {
        for s in 1..=3 {
            for wv in [0.0, 1.0] {
                for _ in 0..3 {
                    y.push(if s == 2 { 1.0 + wv } else { 0.0 });
                    w.push(wv);
                    d.push(dv);
                    t.push(s);
                }
            }
        }
    }
    let n = y.len();
    let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { w[i] });
    let rc = RcDataset::new(y, z, d, t, 3, 3).unwrap();
    let fit = estimate_att_rc(&rc, &spec_w()).unwrap();
    assert!(fit.series.get(3).unwrap().abs() < 1e-10);
    assert!(fit.panel_fit.params.f(3).abs() < 1e-10);
}

#[test]
fn empty_group_period_cell_is_reported() {
    let n = 12;
    let t: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
    // No treated row in period 2.
    let d: Vec<bool> = (0..n).map(|i| i < 6 && t[i] != 2).collect();
    let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i % 2) as f64 });
    let rc = RcDataset::new((0..n).map(|i| i as f64).collect(), z, d, t, 3, 3).unwrap();
    assert!(matches!(estimate_att_rc(&rc, &spec_w()), Err(Error::EmptyCell { d: 1, t: 2 })));
}

#[test]
fn empty_period_is_rejected() {
    let n = 6;
    let z = DMatrix::from_element(n, 1, 1.0);
    let err = RcDataset::new(vec![0.0; n], z, vec![true, false, true, false, true, false], vec![1, 1, 3, 3, 1, 3], 3, 3)
        .unwrap_err();
    assert!(matches!(err, Error::EmptyPeriod(2)));
}
