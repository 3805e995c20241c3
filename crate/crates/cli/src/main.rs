//! enkf-cal: calibration runs, measurement design, and diagnostics from
//! tabulated simulator ensembles.
//!
//! Every stochastic subcommand requires an explicit `--seed`; identical
//! configuration plus seed yields byte-identical output files. Exit codes:
//! 0 success, 2 input/validation error, 3 numerical failure. The
//! `ENKF_CAL_THREADS` environment variable caps parallelism (0 means
//! sequential).

#![forbid(unsafe_code)]

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{CalibrateArgs, DesignArgs, LambdaFitArgs, MomentsArgs, TaperFitArgs, ToyDemoArgs};

/// Errors split by exit code: validation problems exit 2, numerical
/// failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Numerical(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<enkf_cal_core::Error> for CliError {
    fn from(err: enkf_cal_core::Error) -> Self {
        if err.is_numerical() {
            CliError::Numerical(err.to_string())
        } else {
            CliError::Validation(err.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "enkf-cal",
    version,
    about = "Ensemble-Kalman-filter computer model calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample moments of a joint ensemble, partitioned into blocks.
    Moments(MomentsArgs),
    /// Condition an ensemble on observations (Gaussian, ensemble, or
    /// multi-stage representation).
    Calibrate(CalibrateArgs),
    /// D-optimal measurement-site selection with covariance tapering.
    Design(DesignArgs),
    /// Maximum-likelihood taper-range scan over candidate distances.
    TaperFit(TaperFitArgs),
    /// Posterior-mean discrepancy precisions from EOF-projected fields.
    LambdaFit(LambdaFitArgs),
    /// One-dimensional demo problem: exact, GP, and both update
    /// representations, emitted as plot-ready tables.
    ToyDemo(ToyDemoArgs),
}

fn configure_threads() -> CliResult<()> {
    if let Ok(raw) = std::env::var("ENKF_CAL_THREADS") {
        let n: usize = raw.parse().map_err(|_| {
            CliError::Validation(format!("ENKF_CAL_THREADS must be an integer, got {raw:?}"))
        })?;
        let threads = if n == 0 { 1 } else { n };
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> CliResult<()> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Moments(args) => commands::moments::run(args),
        Command::Calibrate(args) => commands::calibrate::run(args),
        Command::Design(args) => commands::design::run(args),
        Command::TaperFit(args) => commands::taper_fit::run(args),
        Command::LambdaFit(args) => commands::lambda_fit::run(args),
        Command::ToyDemo(args) => commands::toy_demo::run(args),
    }
}

fn main() {
    match run() {
        Ok(()) => {}
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            std::process::exit(3);
        }
    }
}
