//! Report bundles: summary.json plus CSV artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::Failure;

/// One checked claim, with the bound it was checked against.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: Value,
    pub op: &'static str,
    pub bound: Value,
    pub pass: bool,
}

impl Assertion {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value: json!(value), op: "<=", bound: json!(bound), pass: value <= bound }
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value: json!(value), op: ">=", bound: json!(bound), pass: value >= bound }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value: json!(value), op: "in", bound: json!([lo, hi]), pass: lo <= value && value <= hi }
    }

    pub fn eq<T: Serialize + PartialEq>(name: &str, value: T, want: T) -> Self {
        let pass = value == want;
        Self { name: name.into(), value: json!(value), op: "==", bound: json!(want), pass }
    }
}

#[derive(Debug, Default)]
pub struct Bundle {
    pub assertions: Vec<Assertion>,
    pub results: Value,
    pub csv: Vec<(String, String)>,
    /// Overrides the PASS/FAIL exit code (newton verdicts).
    pub exit: Option<i32>,
}

impl Bundle {
    pub fn new(results: Value) -> Self {
        Self { results, ..Default::default() }
    }

    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn csv(&mut self, name: &str, body: String) {
        self.csv.push((name.into(), body));
    }

    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn exit_code(&self) -> i32 {
        match self.exit {
            Some(code) if self.pass() => code,
            _ if self.pass() => 0,
            _ => 1,
        }
    }

    pub fn write(&self, out: &Path, experiment: &str, seed: u64, config: &Value) -> Result<(), Failure> {
        fs::create_dir_all(out).map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", out.display())))?;
        let summary = json!({
            "experiment": experiment,
            "seed": seed,
            "status": if self.pass() { "PASS" } else { "FAIL" },
            "exit_code": self.exit_code(),
            "assertions": self.assertions,
            "results": self.results,
            "artifacts": self.csv.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "config": config,
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        write_file(&out.join("summary.json"), &text)?;
        for (name, body) in &self.csv {
            write_file(&out.join(name), body)?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// Rows of a CSV with a header line.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",") + "\n";
    for r in rows {
        s += &(r.join(",") + "\n");
    }
    s
}

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}
