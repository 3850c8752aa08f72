use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|value - target| ≤ tolerance`.
    Absolute,
    /// `|value / target - 1| ≤ tolerance`.
    Relative,
    /// `value ≤ tolerance`.
    AtMost,
    /// `value ≥ tolerance`.
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: f64, tolerance: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::Absolute => (value - target).abs() <= tolerance,
            Comparison::Relative => (value / target - 1.0).abs() <= tolerance,
            Comparison::AtMost => value <= tolerance,
            Comparison::AtLeast => value >= tolerance,
        };
        Self { name: name.into(), value, target, tolerance, comparison, pass }
    }

    pub fn absolute(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, target, tolerance, Comparison::Absolute)
    }

    pub fn relative(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, target, tolerance, Comparison::Relative)
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, bound, Comparison::AtMost)
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, bound, Comparison::AtLeast)
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, 1.0, 1.0, Comparison::AtLeast)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub subcommand: String,
    pub config_hash: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Grid parameters, tail bounds and the subcommand's own results.
    pub data: Value,
}

impl Report {
    pub fn new(subcommand: &str, config_hash: &str, checks: Vec<Check>, data: Value) -> Self {
        Self {
            subcommand: subcommand.into(),
            config_hash: config_hash.into(),
            pass: checks.iter().all(|c| c.pass),
            checks,
            data,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// A report plus the CSV tables that accompany it, keyed by relative path.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<(PathBuf, String)>,
}

/// Sorted-key, pretty-printed JSON with a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// CSV text with a header row, LF line endings and a trailing `config_hash` column.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    hash: String,
}

impl Table {
    pub fn new(header: &[&str], config_hash: &str) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(header.iter().copied().chain(["config_hash"])).expect("in-memory write");
        Self { writer, hash: config_hash.into() }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let mut rec: Vec<String> = fields.into_iter().map(|f| f.to_string()).collect();
        rec.push(self.hash.clone());
        self.writer.write_record(&rec).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        String::from_utf8(self.writer.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Writes `<subcommand>.json` and every table under `dir`; returns the written paths.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join(format!("{}.json", outcome.report.subcommand.replace('-', "_")));
    std::fs::write(&json, to_sorted_json(&outcome.report))?;
    written.push(json);
    for (rel, text) in &outcome.tables {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        let s = to_sorted_json(&S { zeta: 1, alpha: 2 });
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.ends_with("}\n"));
    }

    #[test]
    fn table_format() {
        let mut t = Table::new(&["a", "b"], "abc");
        t.row([0.5, 1e-7]);
        let s = t.finish();
        assert_eq!(s, "a,b,config_hash\n0.5,0.0000001,abc\n");
    }

    #[test]
    fn check_comparisons() {
        assert!(Check::relative("r", 1.04, 1.0, 0.05).pass);
        assert!(!Check::relative("r", 1.06, 1.0, 0.05).pass);
        assert!(Check::absolute("a", -3.95, -4.0, 0.1).pass);
        assert!(Check::at_most("m", 1e-11, 1e-10).pass);
        assert!(!Check::at_least("l", 1e-4, 1e-3).pass);
        assert!(!Check::flag("f", false).pass);
    }
}
