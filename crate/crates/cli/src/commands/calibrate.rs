use std::path::{Path, PathBuf};

use enkf_cal_core::update::{
    ensemble_update, gaussian_update, multistage_update, FinalStage, GaussianPosterior,
    MultistagePosterior, StageSchedule, UpdatedEnsemble,
};
use enkf_cal_core::{compute_moments, io, ForwardModel, IceSurrogate, JointEnsemble, ToyForward};
use serde_json::{json, Value};

use crate::config::{
    parse_float_list, require, CalibrateArgs, FileConfig, FinalRep, ForwardKind, Method,
};
use crate::output::{matrix_json, meta, vector_json, write_json};
use crate::CliResult;

pub fn run(args: CalibrateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let file_method = file.method()?;
    let ensemble_path = require(args.ensemble.or(file.ensemble), "--ensemble")?;
    let obs_path = require(args.obs.or(file.obs), "--obs")?;
    let method = require(args.method.or(file_method), "--method")?;
    let out = require(args.out.or(file.out), "--out")?;
    let seed = args.seed.or(file.seed);

    let ensemble = super::load_ensemble(&ensemble_path, args.d_theta.or(file.d_theta))?;
    let obs = io::load_observation(&obs_path, ensemble.d_theta(), ensemble.d_eta())?;

    let config_echo = json!({
        "ensemble": crate::output::display(&ensemble_path),
        "obs": crate::output::display(&obs_path),
        "method": format!("{method:?}").to_lowercase(),
        "seed": seed,
    });

    match method {
        Method::Gaussian => {
            let posterior = gaussian_update(&compute_moments(&ensemble), &obs)?;
            write_gaussian(&out, &posterior, meta("calibrate", config_echo))
        }
        Method::Ensemble => {
            let seed = require(seed, "--seed (required for method=ensemble)")?;
            let updated = ensemble_update(&ensemble, &obs, seed)?;
            write_updated(&out, &updated, meta("calibrate", config_echo))
        }
        Method::Multistage => {
            let seed = require(seed, "--seed (required for method=multistage)")?;
            let stages = args.stages.or(file.stages).unwrap_or(2);
            let schedule = match args.weights.as_deref() {
                Some(raw) => StageSchedule::new(parse_float_list(raw, "--weights")?)?,
                None => match &file.weights {
                    Some(w) => StageSchedule::new(w.clone())?,
                    None => StageSchedule::even(stages)?,
                },
            };
            let forward = require(args.forward, "--forward (required for method=multistage)")?;
            let model: Box<dyn ForwardModel> = match forward {
                ForwardKind::Toy => Box::new(ToyForward),
                ForwardKind::Ice => Box::new(IceSurrogate::new()),
            };
            let final_stage = match args.final_stage {
                FinalRep::Ensemble => FinalStage::Ensemble,
                FinalRep::Gaussian => FinalStage::Gaussian,
            };
            let posterior =
                multistage_update(&ensemble, &obs, &schedule, model.as_ref(), seed, final_stage)?;
            match posterior {
                MultistagePosterior::Ensemble(updated) => {
                    write_updated(&out, &updated, meta("calibrate", config_echo))
                }
                MultistagePosterior::Gaussian(g) => {
                    write_gaussian(&out, &g, meta("calibrate", config_echo))
                }
            }
        }
    }
}

fn write_gaussian(out: &Path, posterior: &GaussianPosterior, meta_value: Value) -> CliResult<()> {
    let (mu_theta, sigma_theta) = posterior.theta_marginal();
    let value = json!({
        "meta": meta_value,
        "mu_post": vector_json(posterior.mean()),
        "mu_theta": vector_json(&mu_theta),
        "sigma_post": matrix_json(posterior.cov()),
        "sigma_theta": matrix_json(&sigma_theta),
        "kalman_gain": matrix_json(posterior.kalman_gain()),
    });
    write_json(out, &value)
}

fn write_updated(out: &Path, updated: &UpdatedEnsemble, meta_value: Value) -> CliResult<()> {
    io::save_ensemble(updated.ensemble(), out)?;
    let summary = summary_json(updated.ensemble(), meta_value);
    let mut summary_path = PathBuf::from(out).into_os_string();
    summary_path.push(".summary.json");
    write_json(&PathBuf::from(summary_path), &summary)
}

/// Moment summary of an updated ensemble: parameter-block mean, covariance,
/// and per-component sample skewness.
fn summary_json(ensemble: &JointEnsemble, meta_value: Value) -> Value {
    let moments = compute_moments(ensemble);
    let d = ensemble.d_theta();
    let m = ensemble.size();
    let mut skew = Vec::with_capacity(d);
    for j in 0..d {
        let mean = moments.mean()[j];
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        for k in 0..m {
            let c = ensemble.members()[(k, j)] - mean;
            m2 += c * c;
            m3 += c * c * c;
        }
        m2 /= m as f64;
        m3 /= m as f64;
        skew.push(m3 / m2.powf(1.5));
    }
    json!({
        "meta": meta_value,
        "m": m,
        "d_theta": d,
        "d_eta": ensemble.d_eta(),
        "mu_theta": vector_json(&moments.mean_theta().clone_owned()),
        "sigma_theta": matrix_json(&moments.cov_theta_theta().clone_owned()),
        "skewness_theta": Value::from(skew),
    })
}
