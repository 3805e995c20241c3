use enkf_cal_core::discrepancy::{estimate_lambda, EofBasis, GammaPrior};
use enkf_cal_core::io;
use enkf_cal_core::linalg::sample_mean_cov;
use serde_json::json;

use crate::config::{require, FileConfig, LambdaFitArgs};
use crate::output::{meta, write_json};
use crate::{CliError, CliResult};

pub fn run(args: LambdaFitArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let pilot_path = require(args.pilot, "--pilot")?;
    let fields_path = require(args.fields, "--fields")?;
    let obs_path = require(args.obs_field, "--obs-field")?;
    let n_outputs = require(args.outputs, "--outputs")?;
    let n_seasons = require(args.seasons, "--seasons")?;
    let k = require(args.k, "--k")?;
    let seed = require(args.seed.or(file.seed), "--seed")?;
    let out = require(args.out.or(file.out), "--out")?;

    let pilot = io::load_matrix_csv(&pilot_path)?;
    let fields = io::load_matrix_csv(&fields_path)?;
    let obs_field = io::load_matrix_csv(&obs_path)?;
    if obs_field.nrows() != 1 {
        return Err(CliError::Validation(format!(
            "--obs-field must hold a single row, got {}",
            obs_field.nrows()
        )));
    }
    if fields.ncols() != pilot.ncols() {
        return Err(CliError::Validation(format!(
            "fields have length {}, pilot snapshots {}",
            fields.ncols(),
            pilot.ncols()
        )));
    }
    if fields.nrows() < 2 {
        return Err(CliError::Validation(
            "need at least 2 ensemble fields".into(),
        ));
    }

    let basis = EofBasis::from_pilot(&pilot, n_outputs, n_seasons, k)?;
    let weight_ensemble = basis.project_fields(&fields)?;
    let (mean_eta, cov_ee) = sample_mean_cov(&weight_ensemble);
    let y = basis.project_field(&obs_field.row(0).transpose())?;

    let prior = GammaPrior {
        shape: args.prior_shape,
        rate: args.prior_rate,
    };
    let estimate = estimate_lambda(&y, &mean_eta, &cov_ee, n_outputs, prior, args.steps, seed)?;

    let value = json!({
        "meta": meta("lambda-fit", json!({
            "pilot": crate::output::display(&pilot_path),
            "fields": crate::output::display(&fields_path),
            "obs_field": crate::output::display(&obs_path),
            "outputs": n_outputs,
            "seasons": n_seasons,
            "k": k,
            "steps": args.steps,
            "prior": {"shape": prior.shape, "rate": prior.rate},
            "seed": seed,
        })),
        "lambda_mean": estimate.precisions.lambda,
        "acceptance_rate": estimate.acceptance_rate,
    });
    write_json(&out, &value)
}
