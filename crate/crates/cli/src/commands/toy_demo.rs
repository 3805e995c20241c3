use std::path::Path;

use enkf_cal_core::density::{default_grid, quadrature_posterior, DensityTable};
use enkf_cal_core::emulator::{gp_posterior_density, DesignRuns, GpConfig};
use enkf_cal_core::update::{ensemble_update, gaussian_update};
use enkf_cal_core::{compute_moments, io, ObservationModel, ToyForward};
use enkf_cal_core::forward::toy_forward;
use enkf_cal_core::sampling::{standard_normal_vector, substream_rng};
use serde_json::json;

use crate::config::{require, FileConfig, ToyDemoArgs};
use crate::output::{meta, write_json};
use crate::{CliError, CliResult};

/// GP hyperparameters for the demo problem: constant mean at the center of
/// the output range, moderate amplitude, unit correlation length.
fn demo_gp_config() -> GpConfig {
    GpConfig {
        mean_const: 0.5,
        signal_var: 0.25,
        lengthscale: 1.0,
        nugget: 0.0,
    }
}

/// Four-run design spanning the prior range.
fn demo_design_runs() -> DesignRuns {
    let theta = vec![-1.5, -0.5, 0.5, 1.5];
    let eta = theta.iter().map(|&t| toy_forward(t)).collect();
    DesignRuns::new(theta, eta).expect("demo runs are well-formed")
}

fn normal_density_table(grid: &[f64], mean: f64, var: f64) -> CliResult<DensityTable> {
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| (-(t - mean) * (t - mean) / (2.0 * var)).exp())
        .collect();
    DensityTable::new(grid.to_vec(), values).map_err(CliError::from)
}

fn write_samples(path: &Path, samples: &[f64]) -> CliResult<()> {
    let mut text = String::from("theta\n");
    for s in samples {
        text.push_str(&format!("{s}\n"));
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Validation(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn sample_skewness(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean: f64 = samples.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for &s in samples {
        let c = s - mean;
        m2 += c * c;
        m3 += c * c * c;
    }
    m2 /= n;
    m3 /= n;
    m3 / m2.powf(1.5)
}

pub fn run(args: ToyDemoArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let seed = require(args.seed.or(file.seed), "--seed")?;
    let out_dir = require(args.out_dir.or(file.out), "--out-dir")?;
    if args.members < 2 {
        return Err(CliError::Validation(
            "--members must be at least 2".into(),
        ));
    }
    if !(args.sigma_y.is_finite() && args.sigma_y > 0.0) {
        return Err(CliError::Validation(format!(
            "--sigma-y must be positive, got {}",
            args.sigma_y
        )));
    }
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Validation(format!("creating {}: {e}", out_dir.display())))?;

    let grid = default_grid();
    let meta_value = meta("toy-demo", json!({
        "members": args.members,
        "y": args.y,
        "sigma_y": args.sigma_y,
        "seed": seed,
    }));

    // Exact posterior by quadrature.
    let exact = quadrature_posterior(&ToyForward, args.y, args.sigma_y, 0.0, 1.0, &grid)?;
    exact.write_csv_path(out_dir.join("exact_posterior.csv"))?;

    // GP-emulator posterior from four forward runs.
    let gp = gp_posterior_density(
        args.y,
        args.sigma_y,
        demo_gp_config(),
        &demo_design_runs(),
        1.0,
        &grid,
    )?;
    gp.write_csv_path(out_dir.join("gp_posterior.csv"))?;

    // Prior ensemble: theta ~ N(0, 1), eta = forward(theta).
    let thetas: Vec<enkf_cal_core::ParameterVector> = (0..args.members)
        .map(|k| {
            let mut rng = substream_rng(seed, k as u64);
            enkf_cal_core::ParameterVector(standard_normal_vector(&mut rng, 1))
        })
        .collect();
    let ensemble = enkf_cal_core::run_ensemble(&ToyForward, &thetas)?;
    let obs = ObservationModel::scalar(0, 1, 1, args.y, args.sigma_y * args.sigma_y)?;

    // Gaussian representation: normal density over the grid.
    let posterior = gaussian_update(&compute_moments(&ensemble), &obs)?;
    let (mu_theta, sigma_theta) = posterior.theta_marginal();
    let gaussian_table = normal_density_table(&grid, mu_theta[0], sigma_theta[(0, 0)])?;
    gaussian_table.write_csv_path(out_dir.join("gaussian_enkf_posterior.csv"))?;

    // Ensemble representation: perturbed-observation update, theta samples.
    let updated = ensemble_update(&ensemble, &obs, seed)?;
    let theta_samples: Vec<f64> = (0..args.members)
        .map(|kmember| updated.ensemble().members()[(kmember, 0)])
        .collect();
    write_samples(&out_dir.join("ensemble_enkf_samples.csv"), &theta_samples)?;
    io::save_ensemble(updated.ensemble(), out_dir.join("ensemble_enkf_updated.csv"))?;

    let sample_mean: f64 = theta_samples.iter().sum::<f64>() / theta_samples.len() as f64;
    let sample_var: f64 = theta_samples
        .iter()
        .map(|s| (s - sample_mean) * (s - sample_mean))
        .sum::<f64>()
        / (theta_samples.len() as f64 - 1.0);

    let summary = json!({
        "meta": meta_value,
        "exact": {
            "mean": exact.mean(),
            "variance": exact.variance(),
            "skewness": exact.skewness(),
            "mode": exact.mode(),
        },
        "gp": {
            "mean": gp.mean(),
            "variance": gp.variance(),
        },
        "gaussian_enkf": {
            "mean": mu_theta[0],
            "variance": sigma_theta[(0, 0)],
            "skewness": 0.0,
        },
        "ensemble_enkf": {
            "mean": sample_mean,
            "variance": sample_var,
            "skewness": sample_skewness(&theta_samples),
        },
    });
    write_json(&out_dir.join("summary.json"), &summary)
}
