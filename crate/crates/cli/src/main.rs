//! `stdisagg` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 validation error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stdisagg::ErrorClass;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(std::io::Error),
    Lib(stdisagg::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<stdisagg::Error> for CliError {
    fn from(e: stdisagg::Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Lib(e) => match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stdisagg",
    version,
    about = "Spatio-temporal disaggregation of gridded averages"
)]
pub struct Cli {
    /// Worker threads for the simulation study (default: all cores).
    #[arg(long, global = true, env = "STDISAGG_THREADS")]
    pub threads: Option<usize>,
    /// JSON object of option values; flags and STDISAGG_* variables take precedence.
    #[arg(long, global = true, env = "STDISAGG_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a latent field plus intercept on a regular lattice.
    Simulate(commands::SimulateArgs),
    /// Average a field into coarse cells and add observation noise.
    Aggregate(commands::AggregateArgs),
    /// Fit hyperparameters and predict on the fine lattice.
    Fit(commands::FitArgs),
    /// Predict on the fine lattice at the hyperparameters of a previous fit.
    Predict(commands::PredictArgs),
    /// Score a prediction against a known field.
    Evaluate(commands::EvaluateArgs),
    /// Run the replicated simulation study and write the metric tables.
    Experiment(commands::ExperimentArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STDISAGG_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
