//! Monte Carlo harness for the three-period design and its generalizations.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt::TvPanelDataset;
use crate::comparators::{did_att, lt_att};
use crate::error::{Error, Result};
use crate::panel::{estimate_gamma1, ModelSpec, PanelDataset};

/// General interactive-fixed-effects DGP with one exclusion covariate `W`.
///
/// `D ~ Bernoulli(p)`, `ξ | D=d ~ N(d, 1)`, `(λ, W) | D=d` bivariate normal
/// with means `(d + lambda_shift, 0)`, unit variances and correlation `rho`; `U_t` is a
/// stationary AR(1) with unit variance and coefficient `ar`. Treated units
/// receive `effect` in every period `t >= t_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDgp {
    pub n: usize,
    pub t_star: usize,
    /// `θ_t` for `t = 1..=T`; its length fixes `T`.
    pub theta: Vec<f64>,
    /// `F_t` for `t = 1..=T`.
    pub f: Vec<f64>,
    pub rho: f64,
    pub p: f64,
    pub effect: f64,
    pub alpha: f64,
    pub ar: f64,
    /// Added to the mean of `λ` in both groups.
    pub lambda_shift: f64,
}

/// Latent draws for one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimUnitLatents {
    pub d: bool,
    pub xi: f64,
    pub lambda: f64,
    pub w: f64,
    pub u: Vec<f64>,
}

impl PanelDgp {
    pub fn t_total(&self) -> usize {
        self.theta.len()
    }

    fn validate(&self) -> Result<()> {
        let t = self.t_total();
        if t < 3 || self.f.len() != t || !(3..=t).contains(&self.t_star) {
            return Err(Error::InvalidArgument(format!(
                "DGP timing: {} thetas, {} factors, t* = {}",
                t,
                self.f.len(),
                self.t_star
            )));
        }
        if self.rho.abs() > 1.0 || self.ar.abs() >= 1.0 || !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidArgument(
                "need |rho| <= 1, |ar| < 1 and p in [0, 1]".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(())
    }

    pub fn draw_unit(&self, rng: &mut impl Rng) -> SimUnitLatents {
        let d = rng.random::<f64>() < self.p;
        let dv = if d { 1.0 } else { 0.0 };
        let xi = dv + rng.sample::<f64, _>(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let lambda = self.lambda_shift + dv + e1;
        let w = self.rho * e1 + (1.0 - self.rho * self.rho).max(0.0).sqrt() * e2;
        let innov = (1.0 - self.ar * self.ar).sqrt();
        let mut u = Vec::with_capacity(self.t_total());
        for t in 0..self.t_total() {
            let e: f64 = rng.sample(StandardNormal);
            let v = if t == 0 { e } else { self.ar * u[t - 1] + innov * e };
            u.push(v);
        }
        SimUnitLatents { d, xi, lambda, w, u }
    }

    pub fn untreated_outcome(&self, unit: &SimUnitLatents, t: usize) -> f64 {
        self.theta[t - 1] + unit.xi + unit.lambda * self.f[t - 1] + self.alpha * unit.w + unit.u[t - 1]
    }

    /// Draws latents and the observed panel with `Z = (1, W)`.
    pub fn generate_with_latents(&self, rng: &mut impl Rng) -> Result<(PanelDataset, Vec<SimUnitLatents>)> {
        self.validate()?;
        let t_total = self.t_total();
        let units: Vec<SimUnitLatents> = (0..self.n).map(|_| self.draw_unit(rng)).collect();
        let y = DMatrix::from_fn(self.n, t_total, |i, c| {
            let t = c + 1;
            let u = &units[i];
            let treated = u.d && t >= self.t_star;
            self.untreated_outcome(u, t) + if treated { self.effect } else { 0.0 }
        });
        let z = DMatrix::from_fn(self.n, 2, |i, j| if j == 0 { 1.0 } else { units[i].w });
        let d = units.iter().map(|u| u.d).collect();
        let names = vec!["intercept".to_string(), "w".to_string()];
        let data = PanelDataset::from_parts(y, z, d, self.t_star, names)?;
        Ok((data, units))
    }

    pub fn generate(&self, rng: &mut impl Rng) -> Result<PanelDataset> {
        self.generate_with_latents(rng).map(|(d, _)| d)
    }
}

/// DGP with one strictly exogenous time-varying covariate
/// `X_it = loading·λ_i + e_it`, `e` a stationary AR(1) with unit variance:
/// `Y_it(0) = θ_t + ξ_i + λ_i F_t + β X_it + U_it`, `U` iid `N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvDgp {
    pub n: usize,
    pub t_star: usize,
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    pub beta: f64,
    pub loading: f64,
    pub ar_x: f64,
    pub p: f64,
    pub effect: f64,
}

impl TvDgp {
    pub fn generate(&self, rng: &mut impl Rng) -> Result<TvPanelDataset> {
        let t_total = self.theta.len();
        if t_total < 3 || self.f.len() != t_total || self.ar_x.abs() >= 1.0 {
            return Err(Error::InvalidArgument("invalid time-varying DGP".into()));
        }
        let mut y = DMatrix::zeros(self.n, t_total);
        let mut x = DMatrix::zeros(self.n, t_total);
        let mut d = Vec::with_capacity(self.n);
        let innov = (1.0 - self.ar_x * self.ar_x).sqrt();
        for i in 0..self.n {
            let treated = rng.random::<f64>() < self.p;
            let dv = if treated { 1.0 } else { 0.0 };
            let xi = dv + rng.sample::<f64, _>(StandardNormal);
            let lambda = dv + rng.sample::<f64, _>(StandardNormal);
            let mut e = 0.0;
            for t in 0..t_total {
                let z: f64 = rng.sample(StandardNormal);
                e = if t == 0 { z } else { self.ar_x * e + innov * z };
                let xv = self.loading * lambda + e;
                let u: f64 = rng.sample(StandardNormal);
                let post = treated && t + 1 >= self.t_star;
                x[(i, t)] = xv;
                y[(i, t)] = self.theta[t] + xi + lambda * self.f[t] + self.beta * xv + u
                    + if post { self.effect } else { 0.0 };
            }
            d.push(treated);
        }
        TvPanelDataset::from_parts(y, vec![x], d, self.t_star, vec!["x".into()])
    }
}

/// Generator for replication `rep` under root `seed`; independent of
/// execution order.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Seed for cell `index` of a grid derived from a root seed.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index.wrapping_add(1) << 32);
    rng.next_u64()
}

/// One cell of the three-period table design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub f3: f64,
    pub rho: f64,
    pub seed: u64,
    pub alpha: f64,
    pub theta3: f64,
    pub p: f64,
    pub att_true: f64,
}

impl SimConfig {
    pub fn new(n: usize, reps: usize, f3: f64, rho: f64, seed: u64) -> Self {
        Self {
            n,
            reps,
            f3,
            rho,
            seed,
            alpha: 0.0,
            theta3: 2.0,
            p: 0.5,
            att_true: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.n < 4 || self.rho.abs() > 1.0 {
            return Err(Error::InvalidArgument(
                "simulation needs reps >= 1, n >= 4 and |rho| <= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn dgp(&self) -> PanelDgp {
        PanelDgp {
            n: self.n,
            t_star: 3,
            theta: vec![0.0, 0.0, self.theta3],
            f: vec![0.0, 1.0, self.f3],
            rho: self.rho,
            p: self.p,
            effect: self.att_true,
            alpha: self.alpha,
            ar: 0.0,
            lambda_shift: 0.0,
        }
    }
}

/// The three-period panel for replication `rep` of `cfg`.
pub fn generate_panel(cfg: &SimConfig, rep: u64) -> Result<PanelDataset> {
    cfg.validate()?;
    cfg.dgp().generate(&mut replication_rng(cfg.seed, rep))
}

/// The full 3×3 grid of `F_3 ∈ {1, 1.5, 2}` by `ρ ∈ {0.1, 0.5, 1}`.
pub fn table_grid(n: usize, reps: usize, root_seed: u64) -> Vec<SimConfig> {
    let mut cells = Vec::new();
    for f3 in [1.0, 1.5, 2.0] {
        for rho in [0.1, 0.5, 1.0] {
            let seed = derive_seed(root_seed, cells.len() as u64);
            cells.push(SimConfig::new(n, reps, f3, rho, seed));
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimEstimator {
    Ife,
    Did,
    Lt,
}

impl SimEstimator {
    pub const ALL: [SimEstimator; 3] = [SimEstimator::Ife, SimEstimator::Did, SimEstimator::Lt];

    pub fn label(self) -> &'static str {
        match self {
            SimEstimator::Ife => "ife",
            SimEstimator::Did => "did",
            SimEstimator::Lt => "lt",
        }
    }

    pub fn estimate(self, data: &PanelDataset) -> Result<f64> {
        match self {
            SimEstimator::Ife => {
                let fit = estimate_gamma1(data, &ModelSpec::new(vec![0], vec![1]))?;
                fit.params.att(3)
            }
            SimEstimator::Did => did_att(data, 3),
            SimEstimator::Lt => lt_att(data, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub bias: f64,
    pub rmse: f64,
    pub mad: f64,
    pub failed_reps: usize,
}

impl Metrics {
    /// Bias, RMSE and median absolute error about `truth` over the
    /// successful replications.
    pub fn from_estimates(estimates: &[f64], truth: f64, failed_reps: usize) -> Self {
        if estimates.is_empty() {
            return Self {
                bias: f64::NAN,
                rmse: f64::NAN,
                mad: f64::NAN,
                failed_reps,
            };
        }
        let r = estimates.len() as f64;
        let bias = estimates.iter().map(|e| e - truth).sum::<f64>() / r;
        let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / r).sqrt();
        let mut abs: Vec<f64> = estimates.iter().map(|e| (e - truth).abs()).collect();
        Self {
            bias,
            rmse,
            mad: median(&mut abs),
            failed_reps,
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub n: usize,
    pub f3: f64,
    pub rho: f64,
    pub reps: usize,
    pub ife: Metrics,
    pub did: Metrics,
    pub lt: Metrics,
}

impl SimCell {
    pub fn metrics(&self, est: SimEstimator) -> &Metrics {
        match est {
            SimEstimator::Ife => &self.ife,
            SimEstimator::Did => &self.did,
            SimEstimator::Lt => &self.lt,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, n: usize, f3: f64, rho: f64) -> Option<&SimCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.f3 == f3 && c.rho == rho)
    }
}

/// Per-replication estimates of the three estimators (`None` on failure).
pub fn replicate(cfg: &SimConfig) -> Result<Vec<[Option<f64>; 3]>> {
    cfg.validate()?;
    let dgp = cfg.dgp();
    Ok((0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let data = dgp.generate(&mut replication_rng(cfg.seed, rep));
            SimEstimator::ALL.map(|e| data.as_ref().ok().and_then(|d| e.estimate(d).ok()))
        })
        .collect())
}

pub fn run_cell(cfg: &SimConfig) -> Result<SimCell> {
    let draws = replicate(cfg)?;
    let metrics = |k: usize| {
        let ok: Vec<f64> = draws.iter().filter_map(|r| r[k]).collect();
        Metrics::from_estimates(&ok, cfg.att_true, draws.len() - ok.len())
    };
    Ok(SimCell {
        n: cfg.n,
        f3: cfg.f3,
        rho: cfg.rho,
        reps: cfg.reps,
        ife: metrics(0),
        did: metrics(1),
        lt: metrics(2),
    })
}

pub fn run_grid(cfgs: &[SimConfig]) -> Result<SimResult> {
    let cells = cfgs.iter().map(run_cell).collect::<Result<Vec<_>>>()?;
    Ok(SimResult { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

const CSV_HEADER: [&str; 16] = [
    "n", "f3", "rho", "reps", "ife_bias", "did_bias", "lt_bias", "ife_rmse", "did_rmse",
    "lt_rmse", "ife_mad", "did_mad", "lt_mad", "ife_failed", "did_failed", "lt_failed",
];

/// Renders one row per `(n, F_3, ρ)` cell with bias, RMSE and MAD blocks.
pub fn emit_table(result: &SimResult, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(result),
        TableFormat::Text => emit_text(result),
    }
}

fn emit_csv(result: &SimResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for c in &result.cells {
        let ests = SimEstimator::ALL.map(|e| *c.metrics(e));
        let mut rec = vec![c.n.to_string(), c.f3.to_string(), c.rho.to_string(), c.reps.to_string()];
        rec.extend(ests.iter().map(|m| m.bias.to_string()));
        rec.extend(ests.iter().map(|m| m.rmse.to_string()));
        rec.extend(ests.iter().map(|m| m.mad.to_string()));
        rec.extend(ests.iter().map(|m| m.failed_reps.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Parses the CSV produced by [`emit_table`].
pub fn parse_table_csv(text: &str) -> Result<SimResult> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidData("unexpected simulation table header".into()));
    }
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::InvalidData(format!("bad number `{}`", &rec[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::InvalidData(format!("bad integer `{}`", &rec[i])))
        };
        let m = |k: usize| -> Result<Metrics> {
            Ok(Metrics {
                bias: num(4 + k)?,
                rmse: num(7 + k)?,
                mad: num(10 + k)?,
                failed_reps: int(13 + k)?,
            })
        };
        cells.push(SimCell {
            n: int(0)?,
            f3: num(1)?,
            rho: num(2)?,
            reps: int(3)?,
            ife: m(0)?,
            did: m(1)?,
            lt: m(2)?,
        });
    }
    Ok(SimResult { cells })
}

fn emit_text(result: &SimResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>5} {:>5} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
        "n", "F3", "rho", "IFE", "DID", "LT", "IFE", "DID", "LT", "IFE", "DID", "LT"
    );
    let _ = writeln!(
        out,
        "{:<18} | {:^26} | {:^26} | {:^26}",
        "", "Bias", "RMSE", "MAD"
    );
    for c in &result.cells {
        let ests = SimEstimator::ALL.map(|e| *c.metrics(e));
        let _ = write!(out, "{:<6} {:>5} {:>5}", c.n, c.f3, c.rho);
        for block in [
            ests.map(|m| m.bias),
            ests.map(|m| m.rmse),
            ests.map(|m| m.mad),
        ] {
            let _ = write!(out, " | {:>8.3} {:>8.3} {:>8.3}", block[0], block[1], block[2]);
        }
        out.push('\n');
    }
    out
}
