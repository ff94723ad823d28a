//! Command-line front end for `ife-att`.
//!
//! Subcommands: `estimate`, `simulate`, `event-study` and `check-relevance`.
//! Results go to stdout or `--output` as JSON (see [`report`]); `simulate`
//! writes a CSV or text table instead. Exit codes: 0 on success, 2 for
//! invalid input or arguments, 3 when estimation fails.

mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ife_att::alt::{att_serial_uncorr, att_timevarying, fit_serial_uncorr, fit_timevarying};
use ife_att::comparators::{comparator_series, did_att, lt_att};
use ife_att::inference::{
    bootstrap_att, normal_ci_95, overid_report, pretest_wald, pretest_wald_bootstrap, BootstrapResult, Estimator,
    InputData,
};
use ife_att::io::{
    group_time_event_study, load_multigroup_csv, load_panel_csv, load_rc_csv, load_tv_csv, EventStudyOptions,
    Schema, DEFAULT_MIN_GROUP_SIZE,
};
use ife_att::panel::{check_relevance, estimate_att};
use ife_att::rc::estimate_att_rc;
use ife_att::simulation::{derive_seed, emit_table, table_grid, run_grid, SimConfig, TableFormat};
use ife_att::{AttSeries, ModelSpec};

pub use config::{EstimatorArg, FormatArg, Layout, RunConfig};
use report::{put_list, put_num, Object};

pub const DEFAULT_SEED: u64 = 20_240_101;
/// Name of the implicit constant column in the covariate list.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Estimation(m) => write!(f, "estimation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ife_att::Error> for CliError {
    fn from(e: ife_att::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Estimation(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ife-att", version, about = "ATT estimation under interactive fixed effects")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the ATT series from a long-format CSV file.
    Estimate(EstimateArgs),
    /// Monte Carlo table for the three-period design.
    Simulate(SimulateArgs),
    /// Cohort-by-cohort estimates aggregated by event time.
    EventStudy(EventStudyArgs),
    /// Relevance diagnostics for the exclusion covariates.
    CheckRelevance(DataArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct DataArgs {
    /// Long-format CSV input.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    period: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    /// Treated flag (0/1), or the first treatment period for event studies.
    #[arg(long)]
    treated: Option<String>,
    /// Covariate columns (comma separated). Columns named in --x-cols and
    /// --w-cols are added automatically.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// First treatment period, in the file's period labels.
    #[arg(long)]
    t_star: Option<i64>,
    /// Covariates with time-varying effects; `intercept` is the constant.
    #[arg(long, value_delimiter = ',')]
    x_cols: Option<Vec<String>>,
    /// Exclusion covariates with time-invariant effects.
    #[arg(long, value_delimiter = ',')]
    w_cols: Option<Vec<String>>,
    /// JSON output path (stdout if absent).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EstimateArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Bootstrap replications (at least 100).
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a per-period CSV table here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EventStudyArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum treated units per cohort.
    #[arg(long)]
    min_group_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Grid {
    /// `F_3 ∈ {1, 1.5, 2}` by `ρ ∈ {0.1, 0.5, 1}`.
    Table,
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    /// One cell, e.g. `F3=1,rho=1,n=1000`; repeatable.
    #[arg(long)]
    cell: Vec<String>,
    #[arg(long, value_enum)]
    grid: Option<Grid>,
    /// Sample size for grid cells and cells without `n=`.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficient on W in untreated outcomes.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Table output path (stdout if absent).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let command = match cli.command {
        Some(c) => c,
        None => match cfg.command.as_deref() {
            Some("estimate") => Command::Estimate(EstimateArgs::default()),
            Some("simulate") => Command::Simulate(SimulateArgs::default()),
            Some("event-study") => Command::EventStudy(EventStudyArgs::default()),
            Some("check-relevance") => Command::CheckRelevance(DataArgs::default()),
            Some(other) => return Err(CliError::Validation(format!("unknown command `{other}` in config"))),
            None => return Err(CliError::Validation("no command given (see --help)".into())),
        },
    };
    match command {
        Command::Estimate(a) => estimate(&a, &cfg),
        Command::Simulate(a) => simulate(&a, &cfg),
        Command::EventStudy(a) => event_study(&a, &cfg),
        Command::CheckRelevance(a) => relevance(&a, &cfg),
    }
}

struct Input {
    path: PathBuf,
    schema: Schema,
    x_cols: Vec<String>,
    w_cols: Vec<String>,
    output: Option<PathBuf>,
}

fn resolve_input(a: &DataArgs, cfg: &RunConfig) -> Result<Input, CliError> {
    let path = a
        .data
        .clone()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| CliError::Validation("no input file: pass --data or set `data` in the config".into()))?;
    let sc = &cfg.schema;
    let d = Schema::default();
    let x_cols = a
        .x_cols
        .clone()
        .or_else(|| cfg.x_cols.clone())
        .unwrap_or_else(|| vec![INTERCEPT.into()]);
    let w_cols = a.w_cols.clone().or_else(|| cfg.w_cols.clone()).unwrap_or_default();
    let mut covariates = a.covariates.clone().or_else(|| sc.covariates.clone()).unwrap_or_default();
    for c in x_cols.iter().chain(&w_cols) {
        if c != INTERCEPT && !covariates.contains(c) {
            covariates.push(c.clone());
        }
    }
    let pick = |flag: &Option<String>, conf: &Option<String>, default: String| {
        flag.clone().or_else(|| conf.clone()).unwrap_or(default)
    };
    let schema = Schema {
        id: pick(&a.id, &sc.id, d.id),
        period: pick(&a.period, &sc.period, d.period),
        outcome: pick(&a.outcome, &sc.outcome, d.outcome),
        treated: pick(&a.treated, &sc.treated, d.treated),
        covariates,
        t_star: a.t_star.or(sc.t_star),
    };
    Ok(Input {
        path,
        schema,
        x_cols,
        w_cols,
        output: a.output.clone().or_else(|| cfg.output.clone()),
    })
}

fn missing_w() -> CliError {
    CliError::Validation("the ife estimator needs at least one exclusion covariate: set w_cols (--w-cols)".into())
}

fn model_spec(input: &Input, names: &[String]) -> Result<ModelSpec, CliError> {
    if input.w_cols.is_empty() {
        return Err(missing_w());
    }
    let index = |c: &String| {
        names
            .iter()
            .position(|n| n == c)
            .ok_or_else(|| CliError::Validation(format!("`{c}` is not a covariate of the loaded data")))
    };
    if let Some(c) = input.x_cols.iter().find(|c| input.w_cols.contains(c)) {
        return Err(CliError::Validation(format!("`{c}` is listed in both x_cols and w_cols")));
    }
    let x = input.x_cols.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    let w = input.w_cols.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    Ok(ModelSpec::new(x, w))
}

fn no_spec() -> ModelSpec {
    ModelSpec::new(vec![], vec![])
}

fn write_output(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json(doc: &Value, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    text.push('\n');
    write_output(&text, path)
}

/// Everything `estimate` reports besides the per-period rows.
struct Fitted {
    series: AttSeries,
    j_test: Result<Object, String>,
    diagnostics: Object,
    boot: Option<BootstrapResult>,
    no_variance: &'static str,
}

const NO_BOOTSTRAP: &str = "no bootstrap requested";

fn json_object(v: Value) -> Object {
    match v {
        Value::Object(o) => o,
        _ => unreachable!("built from an object literal"),
    }
}

const NEEDS_BOOTSTRAP: &str = "this estimator has no analytic variance; pass --bootstrap B";

fn boot_if(
    reps: Option<usize>,
    data: InputData<'_>,
    spec: &ModelSpec,
    est: Estimator,
    seed: u64,
) -> Result<Option<BootstrapResult>, CliError> {
    reps.map(|b| bootstrap_att(data, spec, est, b, seed)).transpose().map_err(Into::into)
}

fn estimate(a: &EstimateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let input = resolve_input(&a.input, cfg)?;
    let layout = a.layout.or(cfg.layout).unwrap_or(Layout::Panel);
    let est = a.estimator.or(cfg.estimator).unwrap_or(EstimatorArg::Ife);
    let reps = a.bootstrap.or(cfg.bootstrap);
    let seed = a.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let estimator = match (layout, est) {
        (Layout::Panel, EstimatorArg::Ife) => Estimator::IfePanel,
        (Layout::Panel, EstimatorArg::Did) => Estimator::Did,
        (Layout::Panel, EstimatorArg::Lt) => Estimator::Lt,
        (Layout::Panel, EstimatorArg::T3) => Estimator::SerialUncorr,
        (Layout::Rc, EstimatorArg::Ife) => Estimator::IfeRc,
        (Layout::Tv, EstimatorArg::T4) => Estimator::TimeVarying,
        (l, e) => {
            return Err(CliError::Validation(format!(
                "estimator `{}` is not available for layout `{}`",
                e.to_possible_value().unwrap().get_name(),
                l.to_possible_value().unwrap().get_name()
            )))
        }
    };
    if est == EstimatorArg::Ife && input.w_cols.is_empty() {
        return Err(missing_w());
    }

    let (fitted, n, t_total, t_star) = match layout {
        Layout::Panel => {
            let data = load_panel_csv(&input.path, &input.schema)?;
            let mut diagnostics = Object::new();
            let (spec, series, j_test) = match estimator {
                Estimator::IfePanel => {
                    let spec = model_spec(&input, data.covariate_names())?;
                    let (fit, series) = estimate_att(&data, &spec)?;
                    let rel = check_relevance(&data, &spec)?;
                    if rel.weak {
                        eprintln!("warning: exclusion covariates look weak (first-stage F below 10)");
                    }
                    diagnostics.insert("relevance".into(), Value::Object(report::relevance(&rel)));
                    let j = report::overid(&overid_report(&fit.fit));
                    (spec, series, Ok(j))
                }
                Estimator::SerialUncorr => {
                    let fits = fit_serial_uncorr(&data)?;
                    let series = att_serial_uncorr(&data, &fits)?;
                    let per: Vec<Value> = fits
                        .periods
                        .iter()
                        .zip(&fits.fits)
                        .zip(&fits.instrument_periods)
                        .map(|((&t, fit), inst)| {
                            let mut o = report::overid(&overid_report(fit));
                            o.insert("t".into(), json!(t));
                            o.insert("instrument_periods".into(), json!(inst));
                            Value::Object(o)
                        })
                        .collect();
                    diagnostics.insert("overid_by_period".into(), json!(per));
                    (no_spec(), series, Err("reported per period in diagnostics.overid_by_period".into()))
                }
                _ => {
                    let f = if estimator == Estimator::Did { did_att } else { lt_att };
                    let series = comparator_series(&data, f)?;
                    (no_spec(), series, Err("comparison estimators have no overidentifying restrictions".into()))
                }
            };
            let boot = boot_if(reps, InputData::Panel(&data), &spec, estimator, seed)?;
            diagnostics.insert("n_treated".into(), json!(data.n_treated()));
            let fitted = Fitted {
                series,
                j_test,
                diagnostics,
                boot,
                no_variance: NEEDS_BOOTSTRAP,
            };
            (fitted, data.n(), data.t_total(), data.t_star())
        }
        Layout::Rc => {
            let data = load_rc_csv(&input.path, &input.schema)?;
            let spec = model_spec(&input, data.covariate_names())?;
            let fit = estimate_att_rc(&data, &spec)?;
            let boot = boot_if(reps, InputData::Rc(&data), &spec, estimator, seed)?;
            let mut diagnostics = Object::new();
            let shares: Vec<f64> = (1..=data.t_total()).map(|t| fit.pi.get(t)).collect();
            put_list(&mut diagnostics, "period_shares", &shares);
            diagnostics.insert("period_counts".into(), json!(data.period_counts()));
            diagnostics.insert("n_treated".into(), json!(data.d().iter().filter(|&&d| d).count()));
            let fitted = Fitted {
                series: fit.series,
                j_test: Err("not reported for repeated cross sections: the moment covariance ignores estimation of the period shares".into()),
                diagnostics,
                boot,
                no_variance: "repeated cross sections have no analytic variance; pass --bootstrap B",
            };
            (fitted, data.n(), data.t_total(), data.t_star())
        }
        Layout::Tv => {
            let data = load_tv_csv(&input.path, &input.schema)?;
            let fits = fit_timevarying(&data)?;
            let series = att_timevarying(&data, &fits)?;
            let boot = boot_if(reps, InputData::Tv(&data), &no_spec(), estimator, seed)?;
            let mut diagnostics = Object::new();
            let per: Vec<Value> = fits
                .params
                .iter()
                .zip(&fits.fits)
                .map(|(p, fit)| {
                    let mut o = Object::new();
                    o.insert("t".into(), json!(p.t));
                    put_num(&mut o, "theta", Some(p.theta), "");
                    put_num(&mut o, "f", Some(p.f), "");
                    put_list(&mut o, "beta", p.beta.as_slice());
                    put_list(&mut o, "zeta", p.zeta.as_slice());
                    o.insert("overid".into(), Value::Object(report::overid(&overid_report(fit))));
                    Value::Object(o)
                })
                .collect();
            diagnostics.insert("parameters_by_period".into(), json!(per));
            diagnostics.insert("n_treated".into(), json!(data.d().iter().filter(|&&d| d).count()));
            let fitted = Fitted {
                series,
                j_test: Err("reported per period in diagnostics.parameters_by_period".into()),
                diagnostics,
                boot,
                no_variance: NEEDS_BOOTSTRAP,
            };
            (fitted, data.n(), data.t_total(), data.t_star())
        }
    };

    let t_star_label = input
        .schema
        .t_star
        .ok_or_else(|| CliError::Validation("t_star is required".into()))?;
    let label = |t: usize| t_star_label + t as i64 - t_star as i64;
    let rows = period_rows(&fitted, &label);
    let pretest = pretest(&fitted);

    let mut diagnostics = fitted.diagnostics;
    diagnostics.insert("estimator".into(), json!(estimator.label()));
    diagnostics.insert("n".into(), json!(n));
    diagnostics.insert("periods".into(), json!((1..=t_total).map(label).collect::<Vec<_>>()));
    diagnostics.insert("t_star".into(), json!(t_star_label));
    let boot_diag = match &fitted.boot {
        Some(b) => Ok(json_object(json!({"replications": b.replications, "failed": b.failed, "seed": seed}))),
        None => Err(NO_BOOTSTRAP.to_string()),
    };
    report::put_obj(&mut diagnostics, "bootstrap", boot_diag);

    if let Some(path) = a.csv.clone().or_else(|| cfg.csv.clone()) {
        write_period_csv(&path, &rows)?;
    }
    let doc = report::document("estimate", rows.estimates, rows.ses, rows.cis, fitted.j_test, pretest, diagnostics);
    write_json(&doc, input.output.as_deref())
}

struct PeriodRows {
    estimates: Vec<Value>,
    ses: Vec<Value>,
    cis: Vec<Value>,
}

fn period_rows(f: &Fitted, label: &dyn Fn(usize) -> i64) -> PeriodRows {
    let s = &f.series;
    let mut rows = PeriodRows {
        estimates: Vec::new(),
        ses: Vec::new(),
        cis: Vec::new(),
    };
    for (i, (&t, &att)) in s.periods.iter().zip(&s.att).enumerate() {
        let key = json!(label(t));
        let mut e = Object::new();
        e.insert("period".into(), key.clone());
        e.insert("t".into(), json!(t));
        put_num(&mut e, "att", Some(att), "");
        e.insert("pre".into(), json!(t < s.t_star));

        let (se, ci, se_method, ci_method) = match &f.boot {
            Some(b) => (Some(b.se[i]), Some(b.percentile_ci[i]), "bootstrap", "bootstrap-percentile"),
            None => {
                let se = s.se(t);
                (se, se.map(|v| normal_ci_95(att, v)), "delta", "normal")
            }
        };
        let mut o = Object::new();
        o.insert("period".into(), key.clone());
        put_num(&mut o, "se", se, f.no_variance);
        o.insert("method".into(), json!(se_method));

        let mut c = Object::new();
        c.insert("period".into(), key);
        c.insert("level".into(), json!(0.95));
        put_num(&mut c, "lower", ci.map(|x| x.0), f.no_variance);
        put_num(&mut c, "upper", ci.map(|x| x.1), f.no_variance);
        c.insert("method".into(), json!(ci_method));

        rows.estimates.push(Value::Object(e));
        rows.ses.push(Value::Object(o));
        rows.cis.push(Value::Object(c));
    }
    rows
}

fn pretest(f: &Fitted) -> Result<Object, String> {
    let s = &f.series;
    if s.pre_periods().is_empty() {
        return Err("no pre-treatment periods beyond the two used for differencing".into());
    }
    if s.joint_cov.is_some() {
        return pretest_wald(s).map(|w| report::wald(&w, "analytic")).map_err(|e| e.to_string());
    }
    match &f.boot {
        Some(b) => pretest_wald_bootstrap(s, b)
            .map(|w| report::wald(&w, "bootstrap"))
            .map_err(|e| e.to_string()),
        None => Err(f.no_variance.into()),
    }
}

fn write_period_csv(path: &Path, rows: &PeriodRows) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Validation(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["period", "att", "se", "lower", "upper", "pre"]).map_err(io)?;
    let cell = |v: &Value| match v {
        Value::Null => String::new(),
        other => other.to_string(),
    };
    for ((e, s), c) in rows.estimates.iter().zip(&rows.ses).zip(&rows.cis) {
        w.write_record([
            cell(&e["period"]),
            cell(&e["att"]),
            cell(&s["se"]),
            cell(&c["lower"]),
            cell(&c["upper"]),
            cell(&e["pre"]),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn event_study(a: &EventStudyArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let input = resolve_input(&a.input, cfg)?;
    let est = a.estimator.or(cfg.estimator).unwrap_or(EstimatorArg::Ife);
    let estimator = match est {
        EstimatorArg::Ife => Estimator::IfePanel,
        EstimatorArg::Did => Estimator::Did,
        EstimatorArg::Lt => Estimator::Lt,
        EstimatorArg::T3 => Estimator::SerialUncorr,
        EstimatorArg::T4 => {
            return Err(CliError::Validation("event studies need a panel estimator (ife, did, lt or t3)".into()))
        }
    };
    let data = load_multigroup_csv(&input.path, &input.schema)?;
    let spec = if estimator == Estimator::IfePanel {
        model_spec(&input, data.covariate_names())?
    } else {
        no_spec()
    };
    let reps = a.bootstrap.or(cfg.bootstrap);
    let seed = a.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let opts = EventStudyOptions {
        min_group_size: a.min_group_size.or(cfg.min_group_size).unwrap_or(DEFAULT_MIN_GROUP_SIZE),
        bootstrap: reps.map(|b| (b, seed)),
    };
    let es = group_time_event_study(&data, &spec, estimator, opts)?;
    let no_se = "pass --bootstrap B for standard errors";

    let mut estimates = Vec::new();
    let mut ses = Vec::new();
    let mut cis = Vec::new();
    for p in &es.events {
        let mut e = Object::new();
        e.insert("event_time".into(), json!(p.e));
        put_num(&mut e, "att", Some(p.att), "");
        let weights: Vec<Value> = p
            .weights
            .iter()
            .map(|(g, w)| json!({"group": data.period_label(*g), "weight": w}))
            .collect();
        e.insert("weights".into(), json!(weights));
        estimates.push(Value::Object(e));

        let mut s = Object::new();
        s.insert("event_time".into(), json!(p.e));
        put_num(&mut s, "se", p.se, no_se);
        s.insert("method".into(), json!("bootstrap"));
        ses.push(Value::Object(s));

        let mut c = Object::new();
        c.insert("event_time".into(), json!(p.e));
        c.insert("level".into(), json!(0.95));
        put_num(&mut c, "lower", p.percentile_ci.map(|x| x.0), no_se);
        put_num(&mut c, "upper", p.percentile_ci.map(|x| x.1), no_se);
        c.insert("method".into(), json!("bootstrap-percentile"));
        cis.push(Value::Object(c));
    }

    let mut diagnostics = Object::new();
    diagnostics.insert("estimator".into(), json!(estimator.label()));
    diagnostics.insert("n".into(), json!(data.n()));
    let groups: Vec<Value> = es
        .groups
        .iter()
        .map(|g| {
            let series: Vec<Value> = g
                .series
                .iter()
                .map(|(e, att)| {
                    let mut o = Object::new();
                    o.insert("event_time".into(), json!(e));
                    put_num(&mut o, "att", Some(*att), "");
                    Value::Object(o)
                })
                .collect();
            json!({"group": data.period_label(g.group), "n_treated": g.n_treated, "series": series})
        })
        .collect();
    diagnostics.insert("groups".into(), json!(groups));
    let boot_diag = match (reps, es.bootstrap_failed) {
        (Some(b), Some(failed)) => Ok(json_object(json!({"replications": b, "failed": failed, "seed": seed}))),
        _ => Err(NO_BOOTSTRAP.to_string()),
    };
    report::put_obj(&mut diagnostics, "bootstrap", boot_diag);

    let doc = report::document(
        "event-study",
        estimates,
        ses,
        cis,
        Err("not computed for event studies; run estimate on a single cohort".into()),
        Err("not computed for aggregated event studies; inspect the negative event times".into()),
        diagnostics,
    );
    write_json(&doc, input.output.as_deref())
}

fn relevance(a: &DataArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let input = resolve_input(a, cfg)?;
    let data = load_panel_csv(&input.path, &input.schema)?;
    let spec = model_spec(&input, data.covariate_names())?;
    let rel = check_relevance(&data, &spec)?;
    if rel.weak {
        eprintln!("warning: exclusion covariates look weak (first-stage F below 10)");
    }
    let mut diagnostics = Object::new();
    diagnostics.insert("n".into(), json!(data.n()));
    diagnostics.insert("relevance".into(), Value::Object(report::relevance(&rel)));
    let doc = report::document(
        "check-relevance",
        vec![],
        vec![],
        vec![],
        Err("not computed by check-relevance".into()),
        Err("not computed by check-relevance".into()),
        diagnostics,
    );
    write_json(&doc, input.output.as_deref())
}

/// Parses `F3=1,rho=0.5,n=1000` (keys are case-insensitive; `n` optional).
fn parse_cell(text: &str, n: usize, reps: usize, seed: u64) -> Result<SimConfig, CliError> {
    let bad = |m: String| CliError::Validation(format!("bad --cell `{text}`: {m}"));
    let (mut f3, mut rho, mut cell_n) = (None, None, n);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("`{v}` is not a number")));
        match k.trim().to_ascii_lowercase().as_str() {
            "f3" => f3 = Some(num(v)?),
            "rho" => rho = Some(num(v)?),
            "n" => cell_n = v.trim().parse().map_err(|_| bad(format!("`{v}` is not a sample size")))?,
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let f3 = f3.ok_or_else(|| bad("F3 is missing".into()))?;
    let rho = rho.ok_or_else(|| bad("rho is missing".into()))?;
    Ok(SimConfig::new(cell_n, reps, f3, rho, seed))
}

fn simulate(a: &SimulateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let sc = &cfg.simulate;
    let n = a.n.or(sc.n).unwrap_or(1000);
    let reps = a.reps.or(sc.reps).unwrap_or(1000);
    let seed = a.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let alpha = a.alpha.or(sc.alpha).unwrap_or(0.0);
    let format = match a.format.or(sc.format).unwrap_or(FormatArg::Text) {
        FormatArg::Csv => TableFormat::Csv,
        FormatArg::Text => TableFormat::Text,
    };
    let grid = match (a.grid, sc.grid.as_deref()) {
        (Some(g), _) => Some(g),
        (None, Some("table")) => Some(Grid::Table),
        (None, Some(other)) => return Err(CliError::Validation(format!("unknown grid `{other}`"))),
        (None, None) => None,
    };
    let cells = if a.cell.is_empty() {
        sc.cells.clone().unwrap_or_default()
    } else {
        a.cell.clone()
    };

    let mut cfgs = Vec::new();
    if grid == Some(Grid::Table) {
        cfgs.extend(table_grid(n, reps, seed));
    }
    for (i, text) in cells.iter().enumerate() {
        cfgs.push(parse_cell(text, n, reps, derive_seed(seed, i as u64))?);
    }
    if cfgs.is_empty() {
        return Err(CliError::Validation("nothing to simulate: pass --cell or --grid table".into()));
    }
    for c in &mut cfgs {
        c.alpha = alpha;
    }
    let result = run_grid(&cfgs)?;
    let path = a.output.clone().or_else(|| cfg.output.clone());
    write_output(&emit_table(&result, format), path.as_deref())
}
