//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_count, parse_list, parse_matrix, BumpConfig, Command, ConfigFile, ExperimentConfig, Format};
use crate::error::{exit, CliError};
use crate::executor::RayonExecutor;
use crate::output::emit;
use crate::registry::Registry;
use crate::run::run;

#[derive(Debug, Parser)]
#[command(name = "convex-ito", version, about = "Monte-Carlo and quadrature experiments on convex functions of Brownian motion")]
pub struct Cli {
    /// TOML file with an `[experiment]` table (overrides flags) and extra `[functions.*]`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact path; CSV also writes `<stem>.summary.json` next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for Monte-Carlo batches.
    #[arg(long, global = true, env = "CONVEX_ITO_THREADS")]
    pub threads: Option<usize>,
    /// Write 0 in the elapsed_ms column.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args, Clone)]
pub struct McArgs {
    /// Sample count; accepts `1e6`.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Antithetic pairs (`n` counts pairs).
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Args, Clone)]
pub struct BumpArgs {
    /// Test-function center, comma separated (default: origin).
    #[arg(long, allow_hyphen_values = true)]
    pub bump_center: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub bump_half_width: f64,
    #[arg(long, default_value_t = 4)]
    pub bump_power: u32,
    /// Gaussian smoothing applied before the check (needed for kinked functions).
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct TraceArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Times, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    /// Linear map S as `a,b;c,d`.
    #[arg(long, allow_hyphen_values = true)]
    pub map: Option<String>,
    /// Reference value checked within 3 standard errors.
    #[arg(long)]
    pub expect: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct DirectionArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Unit direction.
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    #[arg(long)]
    pub expect: Option<f64>,
    #[arg(long)]
    pub no_control_variate: bool,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct PointArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct CurveArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Times, comma separated (default: 0.1·2^-k, k = 0..9).
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    /// Required slope interval `lo,hi` for a passing verdict.
    #[arg(long, allow_hyphen_values = true)]
    pub slope_range: Option<String>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct RepresentationArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    #[command(flatten)]
    pub bump: BumpArgs,
}

#[derive(Debug, Args, Clone)]
pub struct RevuzArgs {
    pub function: String,
    /// Time panels per path.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[command(flatten)]
    pub bump: BumpArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct SupExpArgs {
    pub function: String,
    /// Radii, comma separated (default 1,0.5,0.25).
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    /// Override the calibrated constant C(d).
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct RecursionArgs {
    pub function: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub r_max: f64,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Clone)]
pub struct ConeArgs {
    pub d: usize,
    pub epsilon: f64,
    /// Random directions for the partition and cap-area checks.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum VerifyKind {
    Representation(RepresentationArgs),
    TraceRevuz(RevuzArgs),
    SupExp(SupExpArgs),
    Recursion(RecursionArgs),
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// (1/t) E[f(x + S W_t) − f(x) − ⟨p, S W_t⟩] ≈ ½ tr(Sᵀ Q S).
    Trace(TraceArgs),
    /// (2/t) E[f(x + B_t v) − f(x)] ≈ ⟨Q v, v⟩.
    Direction(DirectionArgs),
    /// Hessian by polarization of directional estimates.
    Hessian(PointArgs),
    /// Itô residual over a time sweep with a log-log slope fit.
    ResidualCurve(CurveArgs),
    VerifyRepresentation(RepresentationArgs),
    VerifyTraceRevuz(RevuzArgs),
    VerifySupExp(SupExpArgs),
    VerifyRecursion(RecursionArgs),
    /// Same checks as the verify-* commands.
    Verify {
        #[command(subcommand)]
        kind: VerifyKind,
    },
    /// Cone count, cap areas and distortion of the ε-grid.
    ConeGridReport(ConeArgs),
    /// Invariant suite over every registered function.
    CorpusTest(CorpusArgs),
    /// Print the function registry.
    List,
}

fn list(s: &Option<String>) -> Result<Vec<f64>, CliError> {
    match s {
        Some(s) => parse_list(s).map_err(CliError::Config),
        None => Ok(Vec::new()),
    }
}

fn opt_list(s: &Option<String>) -> Result<Option<Vec<f64>>, CliError> {
    s.as_ref().map(|s| parse_list(s).map_err(CliError::Config)).transpose()
}

fn apply_mc(cfg: &mut ExperimentConfig, mc: &McArgs) {
    cfg.n = mc.n;
    cfg.seed = mc.seed;
    cfg.antithetic = mc.antithetic;
}

fn apply_bump(cfg: &mut ExperimentConfig, b: &BumpArgs) -> Result<(), CliError> {
    cfg.bump = BumpConfig {
        center: opt_list(&b.bump_center)?,
        half_width: b.bump_half_width,
        power: b.bump_power,
    };
    cfg.smoothing = b.smoothing;
    Ok(())
}

impl Cmd {
    /// Flag-level configuration; `None` for `list`.
    pub fn to_config(&self) -> Result<Option<ExperimentConfig>, CliError> {
        let cfg = match self {
            Cmd::Trace(a) => {
                let mut c = ExperimentConfig::new(Command::Trace);
                c.function = Some(a.function.clone());
                c.x = opt_list(&a.x)?;
                c.t = list(&a.t)?;
                c.map = a.map.as_ref().map(|m| parse_matrix(m).map_err(CliError::Config)).transpose()?;
                c.expect = a.expect;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::Direction(a) => {
                let mut c = ExperimentConfig::new(Command::Direction);
                c.function = Some(a.function.clone());
                c.x = opt_list(&a.x)?;
                c.direction = Some(parse_list(&a.v).map_err(CliError::Config)?);
                c.t = list(&a.t)?;
                c.expect = a.expect;
                c.control_variate = !a.no_control_variate;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::Hessian(a) => {
                let mut c = ExperimentConfig::new(Command::Hessian);
                c.function = Some(a.function.clone());
                c.x = opt_list(&a.x)?;
                c.t = list(&a.t)?;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::ResidualCurve(a) => {
                let mut c = ExperimentConfig::new(Command::ResidualCurve);
                c.function = Some(a.function.clone());
                c.x = opt_list(&a.x)?;
                c.t = list(&a.t)?;
                c.slope_range = match opt_list(&a.slope_range)? {
                    Some(v) if v.len() == 2 => Some([v[0], v[1]]),
                    Some(_) => return Err(CliError::Config("slope-range needs lo,hi".into())),
                    None => None,
                };
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::VerifyRepresentation(a) | Cmd::Verify { kind: VerifyKind::Representation(a) } => {
                let mut c = ExperimentConfig::new(Command::VerifyRepresentation);
                c.function = Some(a.function.clone());
                c.t = list(&a.t)?;
                apply_bump(&mut c, &a.bump)?;
                c
            }
            Cmd::VerifyTraceRevuz(a) | Cmd::Verify { kind: VerifyKind::TraceRevuz(a) } => {
                let mut c = ExperimentConfig::new(Command::VerifyTraceRevuz);
                c.function = Some(a.function.clone());
                c.steps = a.steps;
                apply_bump(&mut c, &a.bump)?;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::VerifySupExp(a) | Cmd::Verify { kind: VerifyKind::SupExp(a) } => {
                let mut c = ExperimentConfig::new(Command::VerifySupExp);
                c.function = Some(a.function.clone());
                c.r = list(&a.r)?;
                c.c = a.c;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::VerifyRecursion(a) | Cmd::Verify { kind: VerifyKind::Recursion(a) } => {
                let mut c = ExperimentConfig::new(Command::VerifyRecursion);
                c.function = Some(a.function.clone());
                c.x = opt_list(&a.x)?;
                c.r_max = a.r_max;
                c.levels = a.levels;
                c.c = a.c;
                apply_mc(&mut c, &a.mc);
                c
            }
            Cmd::ConeGridReport(a) => {
                let mut c = ExperimentConfig::new(Command::ConeGridReport);
                c.d = a.d;
                c.epsilon = a.epsilon;
                c.samples = a.samples;
                c.seed = a.seed;
                c
            }
            Cmd::CorpusTest(a) => {
                let mut c = ExperimentConfig::new(Command::CorpusTest);
                c.seed = a.seed;
                c
            }
            Cmd::List => return Ok(None),
        };
        Ok(Some(cfg))
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match try_execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(core) = &e {
                if let convex_ito_core::Error::NegativeIntegrand { sample, .. }
                | convex_ito_core::Error::NonFinite { sample, .. } = core
                {
                    eprintln!("offending sample: {sample:?}");
                }
            }
            e.exit_code()
        }
    }
}

fn try_execute(cli: Cli) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut registry = Registry::builtin();
    registry.extend_from(file.functions)?;
    let Some(mut cfg) = cli.command.to_config()? else {
        print!("{}", registry.listing());
        return Ok(exit::PASS);
    };
    cfg.output = cli.out.clone();
    cfg.format = cli.format.unwrap_or_default();
    cfg.no_timing = cli.no_timing;
    cfg.threads = cli.threads;
    if let Some(table) = &file.experiment {
        cfg = cfg.overridden_by(table)?;
    }
    cfg.validate()?;
    let exec = match cfg.threads {
        Some(n) => RayonExecutor::with_threads(n).map_err(|e| CliError::Config(e.to_string()))?,
        None => RayonExecutor::global(),
    };
    let report = run(&cfg, &registry, &exec)?;
    emit(&report, cfg.format, cfg.output.as_deref())?;
    Ok(if report.summary.pass { exit::PASS } else { exit::FAIL })
}
