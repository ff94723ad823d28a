use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ife_att::inference::{bootstrap_att, normal_ci_95, pretest_wald, Estimator, InputData};
use ife_att::io::{
    group_time_event_study, load_multigroup_csv, load_panel_csv, load_rc_csv, write_panel_csv, write_rc_csv,
    EventStudyOptions, Schema,
};
use ife_att::panel::estimate_att;
use ife_att::rc::{estimate_att_rc, RcDataset};
use ife_att::simulation::{parse_table_csv, replication_rng, PanelDgp, TvDgp};
use ife_att::alt::{att_timevarying, fit_timevarying};
use ife_att::{ModelSpec, PanelDataset};
use ife_att_cli::cli_main;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("ife-att").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("expected a number, got {v}"))
}

fn schema(t_star: i64) -> Schema {
    Schema {
        covariates: vec!["w".into()],
        t_star: Some(t_star),
        ..Schema::default()
    }
}

fn five_period(n: usize, seed: u64) -> PanelDataset {
    PanelDgp {
        n,
        t_star: 4,
        theta: vec![0.0, 0.0, 1.0, 2.0, 2.5],
        f: vec![0.0, 1.0, 1.5, 2.0, 2.5],
        rho: 0.8,
        p: 0.5,
        effect: 1.0,
        alpha: 0.0,
        ar: 0.0,
        lambda_shift: 0.0,
    }
    .generate(&mut replication_rng(seed, 0))
    .unwrap()
}

fn panel_fixture(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("panel.csv");
    write_panel_csv(&path, &five_period(600, 1), &schema(4)).unwrap();
    path
}

/// Every `null` inside an object must sit next to a `<key>_reason` string.
fn assert_nulls_have_reasons(v: &Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                if x.is_null() {
                    let reason = m.get(&format!("{k}_reason"));
                    assert!(matches!(reason, Some(Value::String(_))), "`{k}` is null without a reason");
                }
                assert_nulls_have_reasons(x);
            }
        }
        Value::Array(a) => {
            for x in a {
                assert!(!x.is_null(), "bare null in array");
                assert_nulls_have_reasons(x);
            }
        }
        _ => {}
    }
}

#[test]
fn estimate_matches_library_calls() {
    let dir = TempDir::new().unwrap();
    let data_path = panel_fixture(&dir);
    let out = dir.path().join("out.json");
    let code = run(&["estimate", "--data", s(&data_path), "--t-star", "4", "--w-cols", "w", "-o", s(&out)]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);

    let data = load_panel_csv(&data_path, &schema(4)).unwrap();
    let (fit, series) = estimate_att(&data, &ModelSpec::new(vec![0], vec![1])).unwrap();
    let est = doc["estimates"].as_array().unwrap();
    assert_eq!(est.len(), series.att.len());
    for (i, &t) in series.periods.iter().enumerate() {
        assert_eq!(est[i]["period"], t as i64);
        assert_eq!(est[i]["pre"], t < 4);
        assert_eq!(num(&est[i]["att"]), series.att[i]);
        let se = series.se(t).unwrap();
        assert_eq!(num(&doc["ses"][i]["se"]), se);
        let (lo, hi) = normal_ci_95(series.att[i], se);
        assert_eq!(num(&doc["cis"][i]["lower"]), lo);
        assert_eq!(num(&doc["cis"][i]["upper"]), hi);
    }
    assert_eq!(num(&doc["j_test"]["statistic"]), fit.fit.j_stat);
    assert_eq!(doc["j_test"]["dof"], fit.fit.j_dof);
    let pre = pretest_wald(&series).unwrap();
    assert_eq!(num(&doc["pretest"]["statistic"]), pre.statistic);
    assert_eq!(doc["pretest"]["dof"], pre.dof);
    assert_eq!(doc["diagnostics"]["relevance"]["rank_deficient"], false);
}

#[test]
fn bootstrap_matches_library_call() {
    let dir = TempDir::new().unwrap();
    let data_path = panel_fixture(&dir);
    let out = dir.path().join("out.json");
    let table = dir.path().join("att.csv");
    let args = [
        "estimate", "--data", s(&data_path), "--t-star", "4", "--w-cols", "w", "--bootstrap", "100", "--seed", "9",
        "-o", s(&out), "--csv", s(&table),
    ];
    assert_eq!(run(&args), 0);
    let doc = read_json(&out);
    let data = load_panel_csv(&data_path, &schema(4)).unwrap();
    let boot = bootstrap_att(InputData::Panel(&data), &ModelSpec::new(vec![0], vec![1]), Estimator::IfePanel, 100, 9)
        .unwrap();
    for i in 0..boot.se.len() {
        assert_eq!(num(&doc["ses"][i]["se"]), boot.se[i]);
        assert_eq!(doc["ses"][i]["method"], "bootstrap");
        assert_eq!(num(&doc["cis"][i]["lower"]), boot.percentile_ci[i].0);
    }
    assert_eq!(doc["diagnostics"]["bootstrap"]["replications"], 100);
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 1 + boot.se.len());
    assert!(text.starts_with("period,att,se,lower,upper,pre"));
}

#[test]
fn missing_exclusion_covariate_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let data_path = panel_fixture(&dir);
    let out = dir.path().join("out.json");
    assert_eq!(run(&["estimate", "--data", s(&data_path), "--t-star", "4", "-o", s(&out)]), 2);
    assert!(!out.exists());
    // Comparison estimators do not need W.
    assert_eq!(run(&["estimate", "--data", s(&data_path), "--t-star", "4", "--estimator", "did", "-o", s(&out)]), 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);
    assert!(doc["ses"][0]["se"].is_null());
    assert!(doc["j_test"].is_null());
}

#[test]
fn simulate_cell_runs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("table.csv");
    let code = run(&["simulate", "--cell", "F3=1,rho=1,n=1000", "--reps", "10", "--format", "csv", "-o", s(&out)]);
    assert_eq!(code, 0);
    let table = parse_table_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table.cells.len(), 1);
    let cell = &table.cells[0];
    assert_eq!((cell.n, cell.f3, cell.rho, cell.reps), (1000, 1.0, 1.0, 10));
    assert_eq!(run(&["simulate", "--reps", "10"]), 2);
    assert_eq!(run(&["simulate", "--cell", "rho=1", "--reps", "10"]), 2);
}

#[test]
fn config_file_drives_the_run_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    panel_fixture(&dir);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "command = \"estimate\"\ndata = \"panel.csv\"\nw_cols = [\"w\"]\noutput = \"cfg.json\"\n\n[schema]\nt_star = 4\n",
    )
    .unwrap();
    assert_eq!(run(&["--config", s(&cfg)]), 0);
    let doc = read_json(&dir.path().join("cfg.json"));
    assert_eq!(doc["diagnostics"]["estimator"], "ife-panel");

    let out = dir.path().join("did.json");
    assert_eq!(run(&["--config", s(&cfg), "estimate", "--estimator", "did", "-o", s(&out)]), 0);
    assert_eq!(read_json(&out)["diagnostics"]["estimator"], "did");

    std::fs::write(&cfg, "command = \"estimate\"\nunknown_key = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg)]), 2);
}

#[test]
fn repeated_cross_sections_report_missing_variance() {
    let dir = TempDir::new().unwrap();
    let rc = RcDataset::explode_panel(&five_period(300, 2)).unwrap();
    let path = dir.path().join("rc.csv");
    write_rc_csv(&path, &rc, &schema(4)).unwrap();
    let out = dir.path().join("rc.json");
    let code = run(&["estimate", "--layout", "rc", "--data", s(&path), "--t-star", "4", "--w-cols", "w", "-o", s(&out)]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);
    assert!(doc["ses"][0]["se"].is_null());
    assert!(doc["pretest"].is_null());
    let fit = estimate_att_rc(&load_rc_csv(&path, &schema(4)).unwrap(), &ModelSpec::new(vec![0], vec![1])).unwrap();
    for (i, a) in fit.series.att.iter().enumerate() {
        assert_eq!(num(&doc["estimates"][i]["att"]), *a);
    }
    let code = run(&["estimate", "--layout", "rc", "--estimator", "did", "--data", s(&path), "--t-star", "4"]);
    assert_eq!(code, 2);
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    // W is the same for every unit, so it cannot instrument anything.
    let mut text = String::from("id,period,y,d,w\n");
    for i in 0..40 {
        for t in 1..=3 {
            writeln!(text, "{i},{t},{},{},1", (i * t) % 7, i % 2).unwrap();
        }
    }
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, &text).unwrap();
    assert_eq!(run(&["estimate", "--data", s(&flat), "--t-star", "3", "--w-cols", "w"]), 3);

    let unbalanced = dir.path().join("unbalanced.csv");
    std::fs::write(&unbalanced, text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(run(&["estimate", "--data", s(&unbalanced), "--t-star", "3", "--w-cols", "w"]), 2);
    assert_eq!(run(&["estimate", "--data", s(&dir.path().join("absent.csv")), "--t-star", "3", "--w-cols", "w"]), 2);
    assert_eq!(run(&["estimate", "--no-such-flag"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn event_study_matches_library_call() {
    let dir = TempDir::new().unwrap();
    let a = five_period(300, 3);
    let b = five_period(300, 4);
    let mut text = String::from("id,period,y,g,w\n");
    for (c, data, g) in [(0, &a, 14), (1, &b, 13)] {
        for i in 0..data.n() {
            let group = if data.d()[i] { g } else { 0 };
            for t in 1..=5 {
                writeln!(text, "{c}-{i},{},{},{group},{}", t + 10, data.outcome(i, t), data.z()[(i, 1)]).unwrap();
            }
        }
    }
    let path = dir.path().join("groups.csv");
    std::fs::write(&path, &text).unwrap();
    let out = dir.path().join("es.json");
    let code = run(&[
        "event-study", "--data", s(&path), "--treated", "g", "--w-cols", "w", "--estimator", "did", "-o", s(&out),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);

    let sch = Schema {
        treated: "g".into(),
        covariates: vec!["w".into()],
        ..Schema::default()
    };
    let multi = load_multigroup_csv(&path, &sch).unwrap();
    let es = group_time_event_study(&multi, &ModelSpec::new(vec![], vec![]), Estimator::Did, EventStudyOptions::default())
        .unwrap();
    let events = doc["estimates"].as_array().unwrap();
    assert_eq!(events.len(), es.events.len());
    for (j, p) in es.events.iter().enumerate() {
        assert_eq!(events[j]["event_time"], p.e);
        assert_eq!(num(&events[j]["att"]), p.att);
        let total: f64 = events[j]["weights"].as_array().unwrap().iter().map(|w| num(&w["weight"])).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let groups: Vec<i64> = doc["diagnostics"]["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["group"].as_i64().unwrap())
        .collect();
    assert_eq!(groups, vec![13, 14]);
}

#[test]
fn check_relevance_reports_rank() {
    let dir = TempDir::new().unwrap();
    let data_path = panel_fixture(&dir);
    let out = dir.path().join("rel.json");
    assert_eq!(run(&["check-relevance", "--data", s(&data_path), "--t-star", "4", "--w-cols", "w", "-o", s(&out)]), 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);
    let rel = &doc["diagnostics"]["relevance"];
    assert_eq!(rel["rank"], rel["required"]);
    assert_eq!(rel["weak"], false);
}

#[test]
fn time_varying_layout_matches_library_call() {
    let dir = TempDir::new().unwrap();
    let tv = TvDgp {
        n: 500,
        t_star: 3,
        theta: vec![0.0, 0.0, 1.0],
        f: vec![0.0, 1.0, 2.0],
        beta: 1.0,
        loading: 1.0,
        ar_x: 0.5,
        p: 0.5,
        effect: 1.0,
    }
    .generate(&mut replication_rng(5, 0))
    .unwrap();
    let mut text = String::from("id,period,y,d,x\n");
    for i in 0..tv.n() {
        for t in 1..=3 {
            writeln!(text, "{i},{t},{},{},{}", tv.outcome(i, t), u8::from(tv.d()[i]), tv.x(i, t, 0)).unwrap();
        }
    }
    let path = dir.path().join("tv.csv");
    std::fs::write(&path, &text).unwrap();
    let out = dir.path().join("tv.json");
    let code = run(&[
        "estimate", "--layout", "tv", "--estimator", "t4", "--data", s(&path), "--covariates", "x", "--t-star", "3",
        "-o", s(&out),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_nulls_have_reasons(&doc);
    let loaded = ife_att::io::load_tv_csv(
        &path,
        &Schema {
            covariates: vec!["x".into()],
            t_star: Some(3),
            ..Schema::default()
        },
    )
    .unwrap();
    let series = att_timevarying(&loaded, &fit_timevarying(&loaded).unwrap()).unwrap();
    assert_eq!(num(&doc["estimates"][0]["att"]), series.att[0]);
}
