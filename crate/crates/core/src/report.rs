//! Run reports: canonical JSON with sorted keys and `%.12g` floats, plus CSV tables.
//!
//! Reports hold no wall-clock data, so a rerun with the same scenario and seed is
//! byte-identical.

use crate::error::Result;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Assertion {
    pub name: String,
    /// Observed quantity, compared against `bound` as described by `relation`.
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), value, bound, relation: Relation::AtMost, pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), value, bound, relation: Relation::AtLeast, pass: value >= bound }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_g(x)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub name: String,
    pub task: String,
    pub seed: Option<u64>,
    pub version: String,
    /// The scenario as read, after command-line overrides.
    pub inputs: Value,
    pub results: BTreeMap<String, Value>,
    pub assertions: Vec<Assertion>,
    /// Table names; the rows go to `<name>.csv` next to the report.
    pub tables: Vec<String>,
    pub error: Option<String>,
    pub pass: bool,
    #[serde(skip)]
    pub table_data: Vec<Table>,
}

impl RunReport {
    pub fn new(name: &str, task: &str, seed: Option<u64>, inputs: Value) -> Self {
        RunReport {
            name: name.into(),
            task: task.into(),
            seed,
            version: VERSION.into(),
            inputs,
            results: BTreeMap::new(),
            assertions: Vec::new(),
            tables: Vec::new(),
            error: None,
            pass: false,
            table_data: Vec::new(),
        }
    }

    pub fn set<T: Serialize>(&mut self, key: &str, v: T) {
        self.results.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn add_table(&mut self, t: Table) {
        self.tables.push(t.name.clone());
        self.table_data.push(t);
    }

    /// Passing means no error and every assertion holds (and there is at least one).
    pub fn finish(&mut self) {
        self.pass = self.error.is_none() && !self.assertions.is_empty() && self.assertions.iter().all(|a| a.pass);
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).unwrap_or(Value::Null);
        let mut s = String::new();
        write_canonical(&v, 0, &mut s);
        s.push('\n');
        s
    }

    /// Writes `report.json` and one CSV per table into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for t in &self.table_data {
            let f = std::fs::File::create(dir.join(format!("{}.csv", t.name)))?;
            t.write_csv(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// C's `%.12g`: 12 significant digits, trailing zeros removed, exponent form outside
/// `1e-4 <= |x| < 1e12`. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn format_g(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn json_number(x: f64) -> String {
    if x.is_finite() {
        format_g(x)
    } else {
        // JSON has no infinities; keep the value readable as a string
        format!("\"{}\"", format_g(x))
    }
}

/// Pretty JSON with two-space indent; object keys are already sorted (`serde_json` maps
/// are ordered) and floats go through [`format_g`].
fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&json_number(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            // short numeric arrays stay on one line
            if a.len() <= 16 && a.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_canonical(x, 0, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_canonical(x, indent + 1, out);
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
            let n = m.len();
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_canonical(x, indent + 1, out);
                out.push_str(if i + 1 < n { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_g_matches_printf() {
        // reference strings from C printf("%.12g")
        let cases = [
            (0.8660254037844386, "0.866025403784"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1e-05"),
            (1.23456789012345e-7, "1.23456789012e-07"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (0.0001, "0.0001"),
            (100.0, "100"),
            (9.99999999999951, "10"),
            (f64::INFINITY, "inf"),
        ];
        for (x, s) in cases {
            assert_eq!(format_g(x), s, "{x}");
        }
    }

    #[test]
    fn canonical_json_is_sorted_and_stable() {
        let mut r = RunReport::new("t", "gowers", Some(3), serde_json::json!({"b": 1, "a": [0.1, 2.0]}));
        r.set("zeta", 1.0 / 3.0);
        r.set("alpha", vec![1e-20, f64::INFINITY]);
        r.check(Assertion::at_most("x", 0.5, 1.0));
        r.finish();
        let s = r.to_json();
        assert!(s.find("\"alpha\"").unwrap() < s.find("\"zeta\"").unwrap());
        assert!(s.contains("0.333333333333"));
        assert!(s.contains("\"a\": [0.1, 2]"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["pass"], Value::Bool(true));
        assert_eq!(s, r.to_json());
    }
}
