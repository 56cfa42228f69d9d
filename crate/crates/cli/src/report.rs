//! CSV tables, pass/fail checks and the JSON run summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 15 significant digits
            Cell::Num(v) => format!("{v:.14e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v.into())
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, file: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(file).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(&self.header)
            .map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparator: Comparator,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, comparator: Comparator, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            comparator,
            threshold,
            passed: comparator.holds(value, threshold),
        }
    }
}

/// The JSON record of one study run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub study: String,
    pub config: BTreeMap<String, String>,
    pub generator: String,
    pub checks: Vec<Check>,
    pub results: Value,
    pub outputs: Vec<String>,
}

impl Summary {
    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn write(&self, file: &Path) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(file, s + "\n")?;
        Ok(())
    }
}

/// Re-evaluates every recorded check; returns the number checked.
pub fn verify(file: &Path) -> Result<usize, CliError> {
    let text =
        fs::read_to_string(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    let s: Summary = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: malformed summary: {e}", file.display())))?;
    let bad: Vec<String> = s
        .checks
        .iter()
        .filter(|c| !(c.passed && c.comparator.holds(c.value, c.threshold)))
        .map(|c| c.name.clone())
        .collect();
    if bad.is_empty() {
        Ok(s.checks.len())
    } else {
        Err(CliError::Assertion(bad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_fifteen_digits() {
        assert_eq!(Cell::Num(1.0 / 3.0).render(), "3.33333333333333e-1");
        assert_eq!(Cell::Int(12).render(), "12");
    }

    #[test]
    fn nan_never_passes() {
        assert!(!Check::new("x", f64::NAN, Comparator::Lt, 1.0).passed);
        assert!(Check::new("x", 1.0, Comparator::Le, 1.0).passed);
    }
}
