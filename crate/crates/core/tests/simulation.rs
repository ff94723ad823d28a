mod common;

use common::*;
use ife_att::comparators::{comparator_series, did_att, did_bias_oracle, lt_att, lt_bias_oracle, BiasOracleInputs};
use ife_att::simulation::{
    emit_table, table_grid, parse_table_csv, replicate, replication_rng, run_cell, run_grid, Metrics, SimConfig,
    SimEstimator, TableFormat,
};
use ife_att::PanelDataset;
use nalgebra::DMatrix;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn loading_and_exclusion_covariate_are_correlated_within_groups() {
    for rho in [0.1, 0.5, 0.9] {
        let dgp = table_dgp(100_000, 1.5, rho);
        let (_, units) = dgp.generate_with_latents(&mut replication_rng(1, 0)).unwrap();
        for d in [false, true] {
            let g: Vec<_> = units.iter().filter(|u| u.d == d).collect();
            let l: Vec<f64> = g.iter().map(|u| u.lambda).collect();
            let w: Vec<f64> = g.iter().map(|u| u.w).collect();
            assert!((corr(&l, &w) - rho).abs() < 0.05);
            assert!((mean(&l) - if d { 1.0 } else { 0.0 }).abs() < 0.05);
            assert!(mean(&w).abs() < 0.05);
        }
    }
}

#[test]
fn untreated_outcome_gap_matches_model() {
    let n = 100_000;
    let f3 = 2.0;
    let dgp = table_dgp(n, f3, 0.5);
    let (_, units) = dgp.generate_with_latents(&mut replication_rng(2, 0)).unwrap();
    let y3 = |d: bool| {
        let v: Vec<f64> = units.iter().filter(|u| u.d == d).map(|u| dgp.untreated_outcome(u, 3)).collect();
        mean(&v)
    };
    let gap = y3(true) - y3(false);
    // ξ and λ both shift by one; the outcome sd is at most 3.
    assert!((gap - (1.0 + f3)).abs() < 4.0 * 3.0 * (4.0 / n as f64).sqrt(), "gap {gap}");
}

#[test]
fn treated_outcomes_carry_the_effect_only_after_adoption() {
    let dgp = dgp(50, vec![0.0, 0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5, 2.0], 4, 0.5);
    let (data, units) = dgp.generate_with_latents(&mut replication_rng(3, 0)).unwrap();
    for (i, u) in units.iter().enumerate() {
        for t in 1..=4 {
            let extra = if u.d && t >= 4 { 1.0 } else { 0.0 };
            assert!((data.outcome(i, t) - dgp.untreated_outcome(u, t) - extra).abs() < 1e-12);
        }
    }
}

#[test]
fn comparator_biases_do_not_depend_on_rho() {
    let cells: Vec<_> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&rho| run_cell(&SimConfig::new(1000, 1000, 1.5, rho, 17)).unwrap())
        .collect();
    for est in [SimEstimator::Did, SimEstimator::Lt] {
        let b: Vec<f64> = cells.iter().map(|c| c.metrics(est).bias).collect();
        let spread = b.iter().cloned().fold(f64::MIN, f64::max) - b.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.03, "{:?} biases {:?}", est, b);
    }
    for c in &cells {
        let inp = BiasOracleInputs { f_t: 1.5, lambda_gap: 1.0 };
        assert!((c.did.bias - did_bias_oracle(inp)).abs() < 4.0 * c.did.rmse / 1000f64.sqrt());
        assert!((c.lt.bias - lt_bias_oracle(inp)).abs() < 4.0 * c.lt.rmse / 1000f64.sqrt());
    }
}

#[test]
fn median_error_never_exceeds_rmse() {
    let cell = run_cell(&SimConfig::new(250, 200, 2.0, 0.5, 5)).unwrap();
    for est in SimEstimator::ALL {
        let m = cell.metrics(est);
        assert!(m.mad <= m.rmse + 1e-12);
        assert_eq!(m.failed_reps, 0);
    }
}

#[test]
fn stronger_instruments_shrink_median_error() {
    for f3 in [1.0, 2.0] {
        let weak = run_cell(&SimConfig::new(250, 1000, f3, 0.1, 21)).unwrap();
        let strong = run_cell(&SimConfig::new(250, 1000, f3, 1.0, 22)).unwrap();
        assert!(strong.ife.mad <= weak.ife.mad);
        assert!(weak.ife.mad <= weak.ife.rmse && strong.ife.mad <= strong.ife.rmse);
    }
}

#[test]
fn metrics_by_hand() {
    let m = Metrics::from_estimates(&[1.0, 2.0, 4.0], 1.0, 0);
    assert!((m.bias - 4.0 / 3.0).abs() < 1e-12);
    assert!((m.rmse - (10.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(m.mad, 1.0);
    let m = Metrics::from_estimates(&[0.0, 3.0], 1.0, 2);
    assert_eq!(m.mad, 1.5);
    assert_eq!(m.failed_reps, 2);
}

#[test]
fn replications_ignore_thread_count() {
    let cfg = SimConfig::new(200, 64, 1.5, 0.5, 99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| replicate(&cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let sub = SimConfig { reps: 10, ..cfg };
    assert_eq!(&replicate(&sub).unwrap()[..], &a[..10]);
}

#[test]
fn table_grid_layout_and_seeds() {
    let grid = table_grid(1000, 1000, 1);
    assert_eq!(grid.len(), 9);
    assert_eq!((grid[0].f3, grid[0].rho), (1.0, 0.1));
    assert_eq!((grid[1].f3, grid[1].rho), (1.0, 0.5));
    assert_eq!((grid[8].f3, grid[8].rho), (2.0, 1.0));
    let mut seeds: Vec<u64> = grid.iter().map(|c| c.seed).collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 9);
    assert_eq!(grid, table_grid(1000, 1000, 1));
}

#[test]
fn table_round_trips_through_csv() {
    let grid: Vec<_> = table_grid(100, 20, 4).into_iter().take(2).collect();
    let result = run_grid(&grid).unwrap();
    let parsed = parse_table_csv(&emit_table(&result, TableFormat::Csv)).unwrap();
    assert_eq!(parsed, result);
    let text = emit_table(&result, TableFormat::Text);
    assert_eq!(text.lines().count(), 2 + 2);
}

#[test]
fn comparators_on_hand_data() {
    // Columns: untreated (0,1,1), (0,1,3); treated (1,3,6), (1,1,6).
    let y = DMatrix::from_row_slice(4, 3, &[0.0, 1.0, 1.0, 0.0, 1.0, 3.0, 1.0, 3.0, 6.0, 1.0, 1.0, 6.0]);
    let data = PanelDataset::new(y, DMatrix::from_element(4, 1, 1.0), vec![false, false, true, true], 3).unwrap();
    // DID: treated Y3-Y2 mean 4, untreated 1.
    assert_eq!(did_att(&data, 3).unwrap(), 3.0);
    // LT: treated Δ² mean (1 + 5)/2 = 3, untreated (-1 + 1)/2 = 0.
    assert_eq!(lt_att(&data, 3).unwrap(), 3.0);
    let s = comparator_series(&data, did_att).unwrap();
    assert!(s.variance.is_none());
}

#[test]
fn linear_trend_estimator_removes_unit_trends() {
    let dgp = dgp(400, vec![0.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 2.0, 3.0], 4, 0.5);
    let data = draw(&dgp, 7, 0);
    let mut r = rng(8);
    let slopes: Vec<f64> = (0..data.n()).map(|_| rand::Rng::random_range(&mut r, -5.0..5.0)).collect();
    let y = DMatrix::from_fn(data.n(), 4, |i, c| data.y()[(i, c)] + slopes[i] * c as f64);
    let trended = PanelDataset::new(y, data.z().clone(), data.d().to_vec(), 4).unwrap();
    for t in 3..=4 {
        assert!((lt_att(&data, t).unwrap() - lt_att(&trended, t).unwrap()).abs() < 1e-9);
    }
}
