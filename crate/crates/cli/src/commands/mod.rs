pub mod calibrate;
pub mod design;
pub mod lambda_fit;
pub mod moments;
pub mod taper_fit;
pub mod toy_demo;

use std::path::PathBuf;

use enkf_cal_core::io;
use enkf_cal_core::JointEnsemble;

use crate::{CliError, CliResult};

/// Load an ensemble, inferring the parameter count from the header unless
/// the flag (or config) pinned it.
pub fn load_ensemble(path: &PathBuf, d_theta: Option<usize>) -> CliResult<JointEnsemble> {
    let d_theta = match d_theta {
        Some(d) => d,
        None => io::sniff_ensemble_dims(path).map_err(CliError::from)?.0,
    };
    io::load_tabulated_ensemble(path, d_theta).map_err(CliError::from)
}
