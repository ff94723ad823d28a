#![allow(dead_code)]

use ife_att::simulation::{replication_rng, PanelDgp};
use ife_att::rc::RcDataset;
use ife_att::PanelDataset;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three-period table design with `θ = (0, 0, θ3)`, `F = (0, 1, f3)`.
pub fn table_dgp(n: usize, f3: f64, rho: f64) -> PanelDgp {
    PanelDgp {
        n,
        t_star: 3,
        theta: vec![0.0, 0.0, 2.0],
        f: vec![0.0, 1.0, f3],
        rho,
        p: 0.5,
        effect: 1.0,
        alpha: 0.0,
        ar: 0.0,
        lambda_shift: 0.0,
    }
}

pub fn dgp(n: usize, theta: Vec<f64>, f: Vec<f64>, t_star: usize, rho: f64) -> PanelDgp {
    PanelDgp {
        n,
        t_star,
        theta,
        f,
        rho,
        p: 0.5,
        effect: 1.0,
        alpha: 0.0,
        ar: 0.0,
        lambda_shift: 0.0,
    }
}

pub fn draw(dgp: &PanelDgp, seed: u64, rep: u64) -> PanelDataset {
    dgp.generate(&mut replication_rng(seed, rep)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unstructured panel: `Z = (1, W_1..W_{k-1})`, Gaussian outcomes that load
/// on the covariates so that every regressor is relevant.
pub fn random_panel(rng: &mut impl Rng, n: usize, t_total: usize, t_star: usize, k: usize) -> PanelDataset {
    let z = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
    let load: Vec<f64> = (0..t_total * k).map(|_| rng.random_range(-1.5..1.5)).collect();
    let y = DMatrix::from_fn(n, t_total, |i, t| {
        let mut v: f64 = rng.random_range(-1.0..1.0);
        for j in 0..k {
            v += load[t * k + j] * z[(i, j)] * (1.0 + t as f64);
        }
        v
    });
    let mut d: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
    d[0] = true;
    d[1] = false;
    PanelDataset::new(y, z, d, t_star).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// One period per unit, drawn uniformly.
pub fn cross_sections(panel: &PanelDataset, rng: &mut impl Rng) -> RcDataset {
    let t_total = panel.t_total();
    let periods: Vec<usize> = (0..panel.n()).map(|_| rng.random_range(1..=t_total)).collect();
    RcDataset::with_names(
        (0..panel.n()).map(|i| panel.outcome(i, periods[i])).collect(),
        panel.z().clone(),
        panel.d().to_vec(),
        periods,
        t_total,
        panel.t_star(),
        panel.covariate_names().to_vec(),
    )
    .unwrap()
}

