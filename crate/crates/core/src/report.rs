//! Check records and their deterministic JSON and CSV serialisation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

/// Anchor used by checks that test the machinery rather than a mathematical
/// fact.
pub const PLUMBING: &str = "plumbing";

pub const CSV_HEADER: &str = "check_id,anchor,computed,expected,deviation,pass";

/// JSON schema of [`Report::to_json`].
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check_id: String,
    pub anchor: String,
    pub computed: f64,
    pub expected: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn make(id: &str, anchor: &str, computed: f64, expected: f64, deviation: f64, tolerance: f64) -> Check {
        Check {
            check_id: id.to_string(),
            anchor: anchor.to_string(),
            computed,
            expected,
            deviation,
            tolerance,
            pass: deviation.is_finite() && deviation <= tolerance,
        }
    }

    /// `|computed − expected| ≤ tol`.
    pub fn absolute(id: &str, anchor: &str, computed: f64, expected: f64, tol: f64) -> Check {
        Self::make(id, anchor, computed, expected, (computed - expected).abs(), tol)
    }

    /// `|computed − expected| ≤ tol·|expected|`; the deviation is relative.
    pub fn relative(id: &str, anchor: &str, computed: f64, expected: f64, tol: f64) -> Check {
        Self::make(id, anchor, computed, expected, (computed - expected).abs() / expected.abs(), tol)
    }

    /// `computed ≤ bound`, recorded with deviation `computed` and tolerance `bound`.
    pub fn at_most(id: &str, anchor: &str, computed: f64, bound: f64) -> Check {
        Self::make(id, anchor, computed, bound, computed, bound)
    }

    /// `computed ≥ bound`, recorded with deviation `bound − computed` and tolerance 0.
    pub fn at_least(id: &str, anchor: &str, computed: f64, bound: f64) -> Check {
        Self::make(id, anchor, computed, bound, bound - computed, 0.0)
    }

    /// A yes/no property: computed 1 or 0 against 1.
    pub fn holds(id: &str, anchor: &str, ok: bool) -> Check {
        let c = if ok { 1.0 } else { 0.0 };
        Self::make(id, anchor, c, 1.0, 1.0 - c, 0.0)
    }

    /// A computation that failed before producing a value.
    pub fn failed(id: &str, anchor: &str, _reason: &str) -> Check {
        Check {
            check_id: id.to_string(),
            anchor: anchor.to_string(),
            computed: f64::NAN,
            expected: f64::NAN,
            deviation: f64::INFINITY,
            tolerance: 0.0,
            pass: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    /// Subcommand-specific payload.
    pub data: BTreeMap<String, Value>,
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Report {
        Report { command: command.to_string(), ..Default::default() }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// Stores a serialisable payload under `key`.
    pub fn data<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.data.insert(key.to_string(), v);
    }

    /// Records a module error as a failing check.
    pub fn error(&mut self, id: &str, anchor: &str, err: impl std::fmt::Display) {
        let msg = format!("{id}: {err}");
        self.checks.push(Check::failed(id, anchor, &msg));
        self.errors.push(msg);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
        self.errors.extend(other.errors);
        for (k, v) in other.data {
            self.data.insert(k, v);
        }
    }

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut top = serde_json::Map::new();
        top.insert("tool".into(), Value::String(env!("CARGO_PKG_NAME").into()));
        top.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        top.insert("command".into(), Value::String(self.command.clone()));
        top.insert(
            "config".into(),
            Value::Object(self.config.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
        );
        let checks = self.checks.iter().map(|c| serde_json::to_value(c).unwrap_or(Value::Null)).collect();
        top.insert("checks".into(), Value::Array(checks));
        top.insert("data".into(), Value::Object(self.data.clone().into_iter().collect()));
        top.insert("errors".into(), Value::Array(self.errors.iter().cloned().map(Value::String).collect()));
        top.insert("all_pass".into(), Value::Bool(self.all_pass()));
        let mut out = String::new();
        write_json(&mut out, &Value::Object(top), 0);
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&c.check_id),
                csv_field(&c.anchor),
                fmt_real(c.computed),
                fmt_real(c.expected),
                fmt_real(c.deviation),
                c.pass
            );
        }
        out
    }
}

/// A real with 17 significant digits; non-finite values as `NaN`, `inf`, `-inf`.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pretty JSON with sorted keys (serde_json maps are ordered) and reals at
/// 17 significant digits. Non-finite reals have already become `null`.
fn write_json(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_real(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json(out, x, indent + 1);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("demo");
        r.config("tol", 1e-8);
        r.push(Check::relative("mass", "bubble mass 64π²", 1.0 + 1e-12, 1.0, 1e-10));
        r.push(Check::absolute("zero", PLUMBING, 3e-9, 0.0, 1e-8));
        r.data("values", &vec![0.1, 1.0 / 3.0]);
        r
    }

    #[test]
    fn pass_iff_deviation_within_tolerance() {
        assert!(Check::absolute("a", PLUMBING, 1.0, 1.0 + 1e-9, 1e-8).pass);
        assert!(!Check::absolute("a", PLUMBING, 1.0, 1.1, 1e-8).pass);
        assert!(!Check::relative("a", PLUMBING, f64::NAN, 1.0, 1.0).pass);
        assert!(Check::at_most("a", PLUMBING, 0.5, 1.0).pass);
        assert!(!Check::at_least("a", PLUMBING, 0.5, 1.0).pass);
        assert!(Check::holds("a", PLUMBING, true).pass);
        let mut r = sample();
        assert!(r.all_pass());
        r.error("boom", PLUMBING, "failed");
        assert!(!r.all_pass());
    }

    #[test]
    fn reals_carry_seventeen_digits() {
        assert_eq!(fmt_real(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt_real(0.1).parse::<f64>().unwrap(), 0.1);
        let json = sample().to_json();
        assert!(json.contains("3.3333333333333331e-1"), "{json}");
        let v: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["data"]["values"][1].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn output_is_deterministic() {
        assert_eq!(sample().to_json(), sample().to_json());
        assert_eq!(sample().to_csv(), sample().to_csv());
        let csv = sample().to_csv();
        assert!(csv.starts_with("check_id,anchor,computed,expected,deviation,pass\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        assert_eq!(csv_field("P[G1,G2]@1"), "\"P[G1,G2]@1\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
