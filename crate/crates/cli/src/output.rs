//! CSV rows and the JSON summary.
//!
//! CSV columns are fixed: `param,value,stderr,n,seed,elapsed_ms`. `param` is
//! the swept time or radius, or the name of the reported quantity.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub param: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    pub elapsed_ms: u64,
}

/// One pass/fail verdict. `value` is the measured quantity; `target` and
/// `tolerance` are present when the check compares against a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, value: f64) -> Self {
        Self {
            name: name.into(),
            pass,
            value,
            target: None,
            tolerance: None,
        }
    }

    /// `|value − target| ≤ tolerance`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass: (value - target).abs() <= tolerance,
            value,
            target: Some(target),
            tolerance: Some(tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub kind: String,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub function: Option<String>,
    pub n: usize,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub fit: Option<Fit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["param", "value", "stderr", "n", "seed", "elapsed_ms"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    rows: &'a [Row],
    summary: &'a Summary,
}

/// Path of the JSON summary written next to a CSV artifact.
pub fn summary_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    csv.with_file_name(name)
}

/// Writes the artifacts. CSV goes to `path` (stdout when absent) with the
/// summary in a sibling `.summary.json` file (stderr when absent); JSON puts
/// rows and summary in one document.
pub fn emit(report: &Report, format: Format, path: Option<&Path>) -> Result<(), CliError> {
    match format {
        Format::Csv => match path {
            Some(p) => {
                write_csv(&report.rows, std::fs::File::create(p)?)?;
                let f = std::fs::File::create(summary_path(p))?;
                serde_json::to_writer_pretty(f, &report.summary)?;
            }
            None => {
                write_csv(&report.rows, std::io::stdout().lock())?;
                eprintln!("{}", serde_json::to_string_pretty(&report.summary)?);
            }
        },
        Format::Json => {
            let doc = JsonDocument {
                rows: &report.rows,
                summary: &report.summary,
            };
            match path {
                Some(p) => serde_json::to_writer_pretty(std::fs::File::create(p)?, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc)?),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_columns() {
        let rows = vec![Row {
            param: "0.01".into(),
            value: 1.0,
            stderr: 0.5,
            n: 10,
            seed: 7,
            elapsed_ms: 0,
        }];
        let s = csv_string(&rows).unwrap();
        assert_eq!(s, "param,value,stderr,n,seed,elapsed_ms\n0.01,1.0,0.5,10,7,0\n");
        assert!(csv_string(&[]).unwrap().starts_with("param,value"));
    }

    #[test]
    fn summary_sits_next_to_csv() {
        assert_eq!(summary_path(Path::new("out/run.csv")), PathBuf::from("out/run.summary.json"));
    }
}
