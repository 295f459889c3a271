//! Machine-readable verification reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Version of the report layout. Bumped on any incompatible change.
pub const SCHEMA_VERSION: u32 = 1;

/// One assertion of a criterion, with the numbers behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Diagnostics are reported but do not enter the verdict.
    pub diagnostic: bool,
    pub values: BTreeMap<String, f64>,
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub criterion: u32,
    pub id: String,
    pub title: String,
    pub seed: u64,
    pub quick: bool,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(criterion: u32, id: &str, title: &str, seed: u64, quick: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            criterion,
            id: id.to_string(),
            title: title.to_string(),
            seed,
            quick,
            passed: false,
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, values: &[(&str, f64)]) {
        self.push(name.into(), passed, false, values);
    }

    pub fn diagnostic(&mut self, name: impl Into<String>, passed: bool, values: &[(&str, f64)]) {
        self.push(name.into(), passed, true, values);
    }

    fn push(&mut self, name: String, passed: bool, diagnostic: bool, values: &[(&str, f64)]) {
        self.checks.push(Check {
            name,
            passed,
            diagnostic,
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Sets the verdict: every non-diagnostic check passed.
    pub fn finish(mut self) -> Self {
        let counted: Vec<_> = self.checks.iter().filter(|c| !c.diagnostic).collect();
        self.passed = !counted.is_empty() && counted.iter().all(|c| c.passed);
        self
    }

    /// Names of the failed non-diagnostic checks.
    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.diagnostic && !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// A CSV table produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.rows.push(cells.into_iter().collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Formats a float for tables: shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Report plus tables of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn new(report: Report) -> Self {
        Self {
            report: report.finish(),
            tables: Vec::new(),
        }
    }

    pub fn with_tables(report: Report, tables: Vec<Table>) -> Self {
        Self {
            report: report.finish(),
            tables,
        }
    }

    /// Writes `criterion-NN-id.json` and the tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let r = &self.report;
        let name = format!("criterion-{:02}-{}.json", r.criterion, r.id);
        fs::write(dir.join(name), r.to_json()?)?;
        for t in &self.tables {
            fs::write(dir.join(&t.file), t.to_csv()?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostics_do_not_affect_the_verdict() {
        let mut r = Report::new(6, "generator", "t", 0, false);
        r.check("a", true, &[("x", 1.0)]);
        r.diagnostic("b", false, &[]);
        let r = r.finish();
        assert!(r.passed);
        assert!(r.failures().is_empty());
    }

    #[test]
    fn a_report_without_checks_fails() {
        assert!(!Report::new(1, "x", "t", 0, false).finish().passed);
    }

    #[test]
    fn json_carries_schema_version() {
        let mut r = Report::new(3, "scaling", "t", 5, true);
        r.check("c", false, &[("v", 0.5)]);
        let v: serde_json::Value = serde_json::from_str(&r.finish().to_json().unwrap()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["passed"], false);
        assert_eq!(v["checks"][0]["values"]["v"], 0.5);
    }

    #[test]
    fn table_quotes_cells_with_commas() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.row(["gamma(1,1)".to_string(), num(0.25)]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"gamma(1,1)\",2.5e-1\n");
    }
}
