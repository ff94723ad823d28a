//! JSON result document.
//!
//! Top-level keys are always `estimates`, `ses`, `cis`, `j_test`, `pretest`
//! and `diagnostics`. A numeric field that is missing or not finite is
//! written as `null` next to a `<field>_reason` string.

use serde_json::{json, Map, Value};

use ife_att::inference::{OverIdReport, WaldTest};
use ife_att::panel::RelevanceReport;

pub const SCHEMA_VERSION: u32 = 1;

pub type Object = Map<String, Value>;

/// Inserts `key: v`, or `key: null` and `key_reason` when `v` is missing or
/// not finite.
pub fn put_num(obj: &mut Object, key: &str, v: Option<f64>, reason: &str) {
    match v {
        Some(x) if x.is_finite() => {
            obj.insert(key.into(), json!(x));
        }
        Some(x) => {
            obj.insert(key.into(), Value::Null);
            obj.insert(format!("{key}_reason"), json!(format!("value is not finite ({x})")));
        }
        None => {
            obj.insert(key.into(), Value::Null);
            obj.insert(format!("{key}_reason"), json!(reason));
        }
    }
}

/// Inserts a numeric list, or `null` and `key_reason` if any entry is not
/// finite.
pub fn put_list(obj: &mut Object, key: &str, v: &[f64]) {
    if v.iter().all(|x| x.is_finite()) {
        obj.insert(key.into(), json!(v));
    } else {
        obj.insert(key.into(), Value::Null);
        obj.insert(format!("{key}_reason"), json!("list contains non-finite values"));
    }
}

/// Inserts an optional object, or `null` and `key_reason`.
pub fn put_obj(obj: &mut Object, key: &str, v: Result<Object, String>) {
    match v {
        Ok(o) => {
            obj.insert(key.into(), Value::Object(o));
        }
        Err(reason) => {
            obj.insert(key.into(), Value::Null);
            obj.insert(format!("{key}_reason"), json!(reason));
        }
    }
}

pub fn wald(test: &WaldTest, method: &str) -> Object {
    let mut o = Object::new();
    put_num(&mut o, "statistic", Some(test.statistic), "");
    o.insert("dof".into(), json!(test.dof));
    put_num(&mut o, "p_value", Some(test.p_value), "");
    o.insert("method".into(), json!(method));
    o
}

pub fn overid(r: &OverIdReport) -> Object {
    let mut o = Object::new();
    put_num(&mut o, "statistic", Some(r.j_stat), "");
    o.insert("dof".into(), json!(r.dof));
    put_num(&mut o, "p_value", Some(r.p_value), "");
    if let Some(label) = &r.label {
        o.insert("label".into(), json!(label));
    }
    o
}

pub fn relevance(r: &RelevanceReport) -> Object {
    let mut o = Object::new();
    o.insert("rank".into(), json!(r.rank));
    o.insert("required".into(), json!(r.required));
    o.insert("rank_deficient".into(), json!(r.rank_deficient));
    put_list(&mut o, "singular_values", &r.singular_values);
    put_num(&mut o, "condition_number", Some(r.condition_number), "");
    put_num(&mut o, "w_f_stat", r.w_f_stat, "first-stage F statistic is not computable");
    put_num(&mut o, "w_f_pvalue", r.w_f_pvalue, "first-stage F statistic is not computable");
    o.insert("weak".into(), json!(r.weak));
    let first: Vec<Value> = r
        .first_stage
        .iter()
        .map(|c| {
            let mut e = Object::new();
            e.insert("name".into(), json!(c.name));
            e.insert("is_w".into(), json!(c.is_w));
            put_num(&mut e, "coef", Some(c.coef), "");
            put_num(&mut e, "se", c.se, "first-stage design is rank deficient");
            Value::Object(e)
        })
        .collect();
    o.insert("first_stage".into(), json!(first));
    o
}

/// Assembles the document from its parts.
pub fn document(
    command: &str,
    estimates: Vec<Value>,
    ses: Vec<Value>,
    cis: Vec<Value>,
    j_test: Result<Object, String>,
    pretest: Result<Object, String>,
    diagnostics: Object,
) -> Value {
    let mut root = Object::new();
    root.insert("schema_version".into(), json!(SCHEMA_VERSION));
    root.insert("command".into(), json!(command));
    root.insert("estimates".into(), json!(estimates));
    root.insert("ses".into(), json!(ses));
    root.insert("cis".into(), json!(cis));
    put_obj(&mut root, "j_test", j_test);
    put_obj(&mut root, "pretest", pretest);
    root.insert("diagnostics".into(), Value::Object(diagnostics));
    Value::Object(root)
}
