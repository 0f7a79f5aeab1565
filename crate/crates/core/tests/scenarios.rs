//! Every shipped scenario parses, and fast ones produce reports that match the report schema.

use blq_core::scenario::Scenario;
use serde_json::Value;
use std::path::{Path, PathBuf};

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario_files() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".schema.json"))
        .collect();
    v.sort();
    v
}

/// Checks `v` against the subset of JSON Schema used by the shipped schema: `type`, `enum`,
/// `required`, `properties`, `additionalProperties: false`, `items`, `oneOf`, `minimum`,
/// `pattern` (only `^[a-z0-9_]+$`) and local `$ref`.
fn validate(v: &Value, s: &Value, root: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = s.get("$ref").and_then(Value::as_str) {
        let key = r.trim_start_matches("#/definitions/");
        return validate(v, &root["definitions"][key], root, path);
    }
    if let Some(alts) = s.get("oneOf").and_then(Value::as_array) {
        let ok = alts.iter().filter(|a| validate(v, a, root, path).is_ok()).count();
        if ok != 1 {
            return Err(format!("{path}: matches {ok} oneOf branches"));
        }
    }
    if let Some(t) = s.get("type") {
        let types: Vec<&str> = match t {
            Value::String(x) => vec![x.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let matches = |ty: &str| match ty {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            "number" => v.is_number(),
            "integer" => v.is_i64() || v.is_u64(),
            _ => false,
        };
        if !types.iter().any(|t| matches(t)) {
            return Err(format!("{path}: expected {types:?}, got {v}"));
        }
    }
    if let Some(e) = s.get("enum").and_then(Value::as_array) {
        if !e.contains(v) {
            return Err(format!("{path}: {v} not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{path}: {x} below {min}"));
        }
    }
    if let (Some(_), Some(x)) = (s.get("pattern"), v.as_str()) {
        if x.is_empty() || !x.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(format!("{path}: {x:?} does not match the pattern"));
        }
    }
    if let Some(obj) = v.as_object() {
        for k in s.get("required").and_then(Value::as_array).into_iter().flatten() {
            let k = k.as_str().unwrap();
            if !obj.contains_key(k) {
                return Err(format!("{path}: missing {k}"));
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(x, sub, root, &format!("{path}.{k}"))?,
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected key {k}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(x, items, root, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn schema() -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenario_dir().join("report.schema.json")).unwrap()).unwrap()
}

#[test]
fn every_scenario_parses() {
    let files = scenario_files();
    assert!(files.len() >= 11);
    for f in files {
        Scenario::from_path(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
    }
}

#[test]
fn reports_match_the_schema() {
    let schema = schema();
    for name in ["c01-young-constant", "adjoint-gaussian-lw2", "discrete-klein-four", "c10-entropy", "c11-determinism"] {
        let s = Scenario::from_path(&scenario_dir().join(format!("{name}.json"))).unwrap();
        let report = s.run();
        assert!(report.pass, "{name} failed: {:?}", report.error);
        let v: Value = serde_json::from_str(&report.to_json()).unwrap();
        validate(&v, &schema, &schema, name).unwrap();
    }
}

#[test]
fn error_reports_match_the_schema() {
    let schema = schema();
    let s = Scenario::from_json(r#"{"task": "gowers", "checks": [{"check": "constant", "n": 8, "d": 2, "value": 1.0}]}"#, "no-seed").unwrap();
    let report = s.run();
    assert!(!report.pass && report.error.is_some());
    let v: Value = serde_json::from_str(&report.to_json()).unwrap();
    validate(&v, &schema, &schema, "no-seed").unwrap();
}

#[test]
fn validator_rejects_bad_reports() {
    let schema = schema();
    let s = Scenario::from_path(&scenario_dir().join("c01-young-constant.json")).unwrap();
    let mut v: Value = serde_json::from_str(&s.run().to_json()).unwrap();
    v["assertions"][0]["relation"] = Value::String("equal".into());
    assert!(validate(&v, &schema, &schema, "r").is_err());
    v.as_object_mut().unwrap().remove("pass");
    assert!(validate(&v, &schema, &schema, "r").is_err());
}
