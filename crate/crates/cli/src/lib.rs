//! Experiment runner for `convex-ito-core`: a function registry, TOML
//! configuration, a rayon-backed executor and CSV/JSON artifacts.

pub mod cli;
pub mod config;
pub mod error;
pub mod executor;
pub mod output;
pub mod registry;
pub mod run;

pub use config::{Command, ExperimentConfig, Format};
pub use error::CliError;
pub use executor::RayonExecutor;
pub use output::{Check, Report, Row, Summary};
pub use registry::Registry;
pub use run::run;
