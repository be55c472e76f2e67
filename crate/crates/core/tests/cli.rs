use std::process::{Command, Output};

use serde_json::Value;

use biharmonic_lab::report::{CSV_HEADER, SCHEMA};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biharmonic-lab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

/// Validates `v` against the subset of JSON Schema the shipped schema uses:
/// type (single or list), required, properties, additionalProperties, items,
/// minLength.
fn validate(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{path}: bad type in schema")),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {types:?}, got {v}"));
        }
    }
    if let (Some(n), Some(s)) = (schema.get("minLength").and_then(Value::as_u64), v.as_str()) {
        if (s.chars().count() as u64) < n {
            return Err(format!("{path}: string shorter than {n}"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap_or_default();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, x, &format!("{path}.{k}"))?,
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => return Err(format!("{path}: unexpected key {k}")),
                    Some(s @ Value::Object(_)) => validate(s, x, &format!("{path}.{k}"))?,
                    _ => {}
                },
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(items, x, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn schema() -> Value {
    serde_json::from_str(SCHEMA).expect("schema parses")
}

#[test]
fn validator_rejects_bad_reports() {
    let s = schema();
    let mut v = json(&run(&["bubble"]));
    assert!(validate(&s, &v, "$").is_ok());
    v["checks"][0]["pass"] = Value::String("yes".into());
    assert!(validate(&s, &v, "$").is_err());
    v.as_object_mut().unwrap().remove("checks");
    assert!(validate(&s, &v, "$").is_err());
}

#[test]
fn bubble_prints_constants_and_passes() {
    let out = run(&["bubble", "--out", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    validate(&schema(), &v, "$").unwrap();
    let a = v["data"]["bubble"]["A"].as_f64().unwrap();
    let target = -416.0 / 3.0 * 2.0 * std::f64::consts::PI.powi(2);
    assert!((a / target - 1.0).abs() < 1e-4);
    assert_eq!(v["all_pass"], Value::Bool(true));
    assert_eq!(v["tool"], "biharmonic-lab");
}

#[test]
fn every_check_has_an_anchor() {
    for args in [&["bubble"][..], &["green", "--samples", "20"], &["pohozaev", "--table"]] {
        let v = json(&run(args));
        validate(&schema(), &v, "$").unwrap();
        for c in v["checks"].as_array().unwrap() {
            assert!(!c["anchor"].as_str().unwrap().is_empty());
        }
    }
}

#[test]
fn quick_verify_passes() {
    let out = run(&["verify", "--all", "--quick"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["checks"].as_array().unwrap().len() > 100);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["--frobnicate", "bubble"][..],
        &["solve"],
        &["solve", "--p", "1.5"],
        &["--tol", "0", "bubble"],
        &["--format", "xml", "bubble"],
        &["spectrum", "--p-grid", "10,abc"],
        &["green", "--robin", "0.9,0.9,0,0"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn failed_checks_exit_one() {
    let out = run(&["--tol", "1e-300", "bubble"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["all_pass"], Value::Bool(false));
    assert_eq!(v["config"]["tol"], "1.0000000000000000e-300");
}

#[test]
fn module_errors_become_failing_records() {
    let out = run(&["spectrum", "--p-grid", "20,10"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    validate(&schema(), &v, "$").unwrap();
    assert!(!v["errors"].as_array().unwrap().is_empty());
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["pass"] == Value::Bool(false)));
}

#[test]
fn csv_output_has_fixed_header() {
    let out = run(&["--format", "csv", "pohozaev", "--table"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert!(lines.all(|l| l.ends_with(",true")));
}

#[test]
fn reports_are_deterministic() {
    for args in [&["green", "--seed", "3", "--samples", "50"][..], &["bubble"], &["--format", "csv", "solve", "--p", "12"]] {
        let a = run(args);
        let b = run(args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    assert_ne!(run(&["green", "--seed", "3", "--samples", "50"]).stdout, run(&["green", "--seed", "4", "--samples", "50"]).stdout);
}

#[test]
fn writes_to_file() {
    let dir = std::env::temp_dir().join(format!("biharmonic-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("green.json");
    let out = run(&["green", "--kr", "0.1,0,0,0", "--find-critical", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    validate(&schema(), &v, "$").unwrap();
    let eigs: Vec<f64> = v["data"]["kr"]["hessian_eigs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let target = -1.0 / (4.0 * std::f64::consts::PI.powi(2));
    assert!(eigs.iter().all(|e| (e - target).abs() < 1e-6));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn branch_writes_records_csv() {
    let dir = std::env::temp_dir().join(format!("biharmonic-lab-branch-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("records.csv");
    let out = run(&["branch", "--p-start", "10", "--p-end", "160", "--records-csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    validate(&schema(), &v, "$").unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let records = v["data"]["records"].as_array().unwrap();
    assert_eq!(text.lines().count(), records.len() + 1);
    assert!(text.starts_with("p,u_max,"));
    std::fs::remove_dir_all(&dir).ok();
}
