use enkf_cal_core::{compute_moments, io};
use nalgebra::DVector;
use serde_json::json;

use crate::config::{require, FileConfig, MomentsArgs, OutputFormat};
use crate::output::{matrix_json, meta, vector_json, write_json};
use crate::CliResult;

pub fn run(args: MomentsArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let file_format = file.format()?;
    let ensemble_path = require(args.ensemble.or(file.ensemble), "--ensemble")?;
    let d_theta = args.d_theta.or(file.d_theta);
    let out = require(args.out.or(file.out), "--out")?;
    let format = args
        .format
        .or(file_format)
        .unwrap_or(OutputFormat::Json);

    let ensemble = super::load_ensemble(&ensemble_path, d_theta)?;
    let moments = compute_moments(&ensemble);

    let eta_diag = DVector::from_iterator(
        moments.d_eta(),
        (0..moments.d_eta()).map(|i| moments.cov_eta_eta()[(i, i)]),
    );

    match format {
        OutputFormat::Json => {
            let value = json!({
                "meta": meta("moments", json!({
                    "ensemble": crate::output::display(&ensemble_path),
                    "d_theta": moments.d_theta(),
                })),
                "m": ensemble.size(),
                "d_theta": moments.d_theta(),
                "d_eta": moments.d_eta(),
                "mu": vector_json(moments.mean()),
                "sigma_theta_theta": matrix_json(&moments.cov_theta_theta().clone_owned()),
                "sigma_theta_eta": matrix_json(&moments.cov_theta_eta().clone_owned()),
                "sigma_eta_eta_diag": vector_json(&eta_diag),
            });
            write_json(&out, &value)?;
        }
        OutputFormat::Csv => {
            // Headerless block tables next to the main file.
            let base = out.clone();
            io::save_matrix_csv(
                &nalgebra::DMatrix::from_row_slice(
                    1,
                    moments.mean().len(),
                    moments.mean().as_slice(),
                ),
                &base,
            )?;
            let stem = |suffix: &str| {
                let mut p = base.clone().into_os_string();
                p.push(suffix);
                std::path::PathBuf::from(p)
            };
            io::save_matrix_csv(&moments.cov_theta_theta().clone_owned(), stem(".sigma_tt.csv"))?;
            io::save_matrix_csv(&moments.cov_theta_eta().clone_owned(), stem(".sigma_te.csv"))?;
            io::save_matrix_csv(
                &nalgebra::DMatrix::from_row_slice(1, eta_diag.len(), eta_diag.as_slice()),
                stem(".sigma_ee_diag.csv"),
            )?;
            let value = json!({
                "meta": meta("moments", json!({
                    "ensemble": crate::output::display(&ensemble_path),
                    "format": "csv",
                })),
                "m": ensemble.size(),
                "d_theta": moments.d_theta(),
                "d_eta": moments.d_eta(),
            });
            write_json(&stem(".meta.json"), &value)?;
        }
    }
    Ok(())
}
