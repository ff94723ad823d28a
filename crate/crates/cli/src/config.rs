//! TOML run configuration. Every key is optional; command-line flags take
//! precedence. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Balanced panel, covariates constant within unit.
    Panel,
    /// Repeated cross sections.
    Rc,
    /// Panel with time-varying covariates.
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Ife,
    Did,
    Lt,
    /// Serially uncorrelated errors; earlier and later outcomes as instruments.
    T3,
    /// Strictly exogenous time-varying covariates.
    T4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Text,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub id: Option<String>,
    pub period: Option<String>,
    pub outcome: Option<String>,
    pub treated: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub t_star: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub cells: Option<Vec<String>>,
    pub grid: Option<String>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub alpha: Option<f64>,
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `estimate`, `simulate`, `event-study` or `check-relevance`; used when
    /// no subcommand is given.
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub layout: Option<Layout>,
    pub estimator: Option<EstimatorArg>,
    #[serde(default)]
    pub schema: SchemaConfig,
    pub x_cols: Option<Vec<String>>,
    pub w_cols: Option<Vec<String>>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub min_group_size: Option<usize>,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.output, &mut cfg.csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
