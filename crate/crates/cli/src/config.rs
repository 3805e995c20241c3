//! Argument structs and config-file merging.
//!
//! Every subcommand takes `--config <json>` with a flat optional schema
//! mirroring the shared flags; explicitly passed flags win over config
//! values, which win over defaults.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Gaussian,
    Ensemble,
    Multistage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FinalRep {
    Ensemble,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForwardKind {
    Toy,
    Ice,
}

/// Flat optional config-file schema; unknown keys are rejected so typos
/// surface as validation errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub ensemble: Option<PathBuf>,
    pub d_theta: Option<usize>,
    pub obs: Option<PathBuf>,
    pub method: Option<String>,
    pub stages: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub restarts: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
            }
        }
    }

    pub fn method(&self) -> CliResult<Option<Method>> {
        self.method
            .as_deref()
            .map(|s| {
                Method::from_str(s, true)
                    .map_err(|_| CliError::Validation(format!("config method {s:?} unknown")))
            })
            .transpose()
    }

    pub fn format(&self) -> CliResult<Option<OutputFormat>> {
        self.format
            .as_deref()
            .map(|s| {
                OutputFormat::from_str(s, true)
                    .map_err(|_| CliError::Validation(format!("config format {s:?} unknown")))
            })
            .transpose()
    }
}

pub fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Validation(format!("missing required argument: {flag}")))
}

/// Parse `NXxNY` grid dimensions.
pub fn parse_grid_dims(raw: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = raw.split('x').collect();
    if parts.len() == 2 {
        if let (Ok(nx), Ok(ny)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok((nx, ny));
        }
    }
    Err(CliError::Validation(format!(
        "grid dims must look like 36x30, got {raw:?}"
    )))
}

/// Comma-separated float list.
pub fn parse_float_list(raw: &str, flag: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("{flag}: not a number: {s:?}")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Ensemble CSV (header theta_1..theta_D,eta_1..eta_E).
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Parameter count; inferred from the header when omitted.
    #[arg(long)]
    pub d_theta: Option<usize>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json: single artifact with meta; csv: headerless block tables.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Ensemble CSV (header theta_1..theta_D,eta_1..eta_E).
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Parameter count; inferred from the header when omitted.
    #[arg(long)]
    pub d_theta: Option<usize>,
    /// Observation JSON ({"y", "sigma_y", "h_indices"}).
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Posterior representation.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Stage count for multistage (even split unless --weights).
    #[arg(long)]
    pub stages: Option<usize>,
    /// Explicit stage weights, e.g. 0.5,0.5; must sum to 1.
    #[arg(long)]
    pub weights: Option<String>,
    /// Built-in forward model rerun between stages (multistage only).
    #[arg(long, value_enum)]
    pub forward: Option<ForwardKind>,
    /// Final-stage representation for multistage.
    #[arg(long, value_enum, default_value = "ensemble")]
    pub final_stage: FinalRep,
    /// RNG seed; required for ensemble and multistage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (ensemble methods also write `<out>.summary.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Ensemble CSV over the spatial grid (eta = one value per site).
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    pub d_theta: Option<usize>,
    /// Lattice dimensions, e.g. 36x30; product must equal d_eta.
    #[arg(long)]
    pub grid_dims: Option<String>,
    /// Number of measurement sites to select.
    #[arg(long)]
    pub n_sites: Option<usize>,
    /// Exchange restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Per-site observation noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub obs_sd: f64,
    /// Candidate taper distances (comma list); default 32 log-spaced in
    /// [0.1, 100].
    #[arg(long)]
    pub taper_rs: Option<String>,
    /// Plug-in taper distance; skips the likelihood scan.
    #[arg(long)]
    pub taper_r: Option<f64>,
    /// RNG seed for the exchange restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TaperFitArgs {
    /// Ensemble CSV over the spatial grid.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    pub d_theta: Option<usize>,
    /// Lattice dimensions, e.g. 10x8.
    #[arg(long)]
    pub grid_dims: Option<String>,
    /// Candidate taper distances (comma list).
    #[arg(long)]
    pub taper_rs: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LambdaFitArgs {
    /// Pilot snapshots CSV (T rows x full field length, headerless).
    #[arg(long)]
    pub pilot: Option<PathBuf>,
    /// Ensemble output fields CSV (m rows x full field length).
    #[arg(long)]
    pub fields: Option<PathBuf>,
    /// Observed field CSV (1 row x full field length).
    #[arg(long)]
    pub obs_field: Option<PathBuf>,
    /// Number of output types.
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Number of seasons per output.
    #[arg(long)]
    pub seasons: Option<usize>,
    /// EOF components per (output, season) block.
    #[arg(long)]
    pub k: Option<usize>,
    /// Metropolis steps (half discarded as burn-in).
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    /// Gamma prior shape.
    #[arg(long, default_value_t = 1.0)]
    pub prior_shape: f64,
    /// Gamma prior rate.
    #[arg(long, default_value_t = 0.001)]
    pub prior_rate: f64,
    /// RNG seed for the sampler.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyDemoArgs {
    /// Ensemble size for the update representations.
    #[arg(long, default_value_t = 200)]
    pub members: usize,
    /// Observed value.
    #[arg(long, default_value_t = 0.8)]
    pub y: f64,
    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma_y: f64,
    /// RNG seed for the prior draws and the perturbed-data update.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the four output tables and the summary.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Optional JSON config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
