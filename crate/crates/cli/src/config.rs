//! Experiment configuration: built from command-line flags, then overridden
//! by the `[experiment]` table of a TOML config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::registry::EntryFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Trace,
    Direction,
    Hessian,
    ResidualCurve,
    VerifyRepresentation,
    VerifyTraceRevuz,
    VerifySupExp,
    VerifyRecursion,
    ConeGridReport,
    CorpusTest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Trace => "trace",
            Command::Direction => "direction",
            Command::Hessian => "hessian",
            Command::ResidualCurve => "residual-curve",
            Command::VerifyRepresentation => "verify-representation",
            Command::VerifyTraceRevuz => "verify-trace-revuz",
            Command::VerifySupExp => "verify-sup-exp",
            Command::VerifyRecursion => "verify-recursion",
            Command::ConeGridReport => "cone-grid-report",
            Command::CorpusTest => "corpus-test",
        }
    }

    fn needs_function(self) -> bool {
        !matches!(self, Command::ConeGridReport | Command::CorpusTest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Test function `scale · Π (1 − u_i²)^power`, normalised to unit integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub half_width: f64,
    pub power: u32,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self {
            center: None,
            half_width: 1.0,
            power: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Write 0 in the `elapsed_ms` column so reruns are byte-identical.
    #[serde(default)]
    pub no_timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Row-major linear map for `trace`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<f64>,
    #[serde(default = "yes")]
    pub control_variate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<[f64; 2]>,
    /// Extra Gaussian smoothing applied to the function before smooth-only
    /// checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default)]
    pub bump: BumpConfig,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn yes() -> bool {
    true
}
fn default_steps() -> usize {
    64
}
fn default_r_max() -> f64 {
    0.5
}
fn default_levels() -> usize {
    6
}
fn default_d() -> usize {
    2
}
fn default_epsilon() -> f64 {
    0.25
}
fn default_samples() -> usize {
    100_000
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            function: None,
            x: None,
            t: Vec::new(),
            r: Vec::new(),
            n: 100_000,
            seed: 7,
            antithetic: false,
            output: None,
            format: Format::Csv,
            no_timing: false,
            threads: None,
            direction: None,
            map: None,
            expect: None,
            control_variate: true,
            slope_range: None,
            smoothing: None,
            bump: BumpConfig::default(),
            steps: default_steps(),
            c: None,
            r_max: default_r_max(),
            levels: default_levels(),
            d: default_d(),
            epsilon: default_epsilon(),
            samples: default_samples(),
        }
    }

    /// Overrides fields with the keys present in `table`.
    pub fn overridden_by(&self, table: &toml::Table) -> Result<Self, CliError> {
        let mut base = toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in table {
            base.insert(k.clone(), v.clone());
        }
        base.try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[experiment]: {}", e.message())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.command.needs_function() && self.function.is_none() {
            return bad(format!("{} needs a function id", self.command.name()));
        }
        for &t in &self.t {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t values must be finite and > 0, got {t}"));
            }
        }
        for &r in &self.r {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("r values must be finite and > 0, got {r}"));
            }
        }
        if let Some(x) = &self.x {
            if x.iter().any(|v| !v.is_finite()) {
                return bad("x must be finite".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }
}

/// Parsed TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: Option<toml::Table>,
    #[serde(default)]
    pub functions: BTreeMap<String, EntryFile>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

/// Parses `1e6`-style counts.
pub fn parse_count(s: &str) -> Result<usize, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(v >= 1.0) || v.fract() != 0.0 || v > 1e15 {
        return Err(format!("'{s}' is not a positive integer"));
    }
    Ok(v as usize)
}

/// Parses a comma-separated list of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|_| format!("'{p}' is not a number"))
        })
        .collect()
}

/// Parses a row-major matrix written as `a,b;c,d`.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("'{s}' is not a square matrix"));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert_eq!(parse_count("250").unwrap(), 250);
        assert!(parse_count("0").is_err());
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("abc").is_err());
    }

    #[test]
    fn matrices_must_be_square() {
        assert_eq!(parse_matrix("2,0;0,2").unwrap(), vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert!(parse_matrix("1,2;3").is_err());
    }

    #[test]
    fn file_overrides_flags() {
        let mut cfg = ExperimentConfig::new(Command::Trace);
        cfg.function = Some("abs_1d".into());
        cfg.t = vec![0.1];
        let file = ConfigFile::parse("[experiment]\nn = 500\nt = [0.5, 0.25]\n").unwrap();
        let merged = cfg.overridden_by(file.experiment.as_ref().unwrap()).unwrap();
        assert_eq!(merged.n, 500);
        assert_eq!(merged.t, vec![0.5, 0.25]);
        assert_eq!(merged.function.as_deref(), Some("abs_1d"));
        let typo = ConfigFile::parse("[experiment]\nseeed = 3\n").unwrap();
        assert!(cfg.overridden_by(typo.experiment.as_ref().unwrap()).is_err());
    }

    #[test]
    fn validation_rejects_bad_times() {
        let mut cfg = ExperimentConfig::new(Command::Trace);
        cfg.function = Some("abs_1d".into());
        cfg.t = vec![0.1, -1.0];
        assert!(cfg.validate().is_err());
        cfg.t = vec![0.1];
        assert!(cfg.validate().is_ok());
        cfg.function = None;
        assert!(cfg.validate().is_err());
    }
}
