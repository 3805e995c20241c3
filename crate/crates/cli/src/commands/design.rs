use enkf_cal_core::design::{fedorov_exchange, DesignProblem};
use enkf_cal_core::taper::{
    default_range_candidates, exponential_taper, fit_taper_range, taper_apply, SpatialGrid,
};
use enkf_cal_core::compute_moments;
use serde_json::json;

use crate::config::{parse_float_list, parse_grid_dims, require, DesignArgs, FileConfig};
use crate::output::{meta, write_json};
use crate::{CliError, CliResult};

pub fn run(args: DesignArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let ensemble_path = require(args.ensemble.or(file.ensemble), "--ensemble")?;
    let grid_dims = require(args.grid_dims.as_deref(), "--grid-dims")?;
    let n_sites = require(args.n_sites, "--n-sites")?;
    let restarts = args.restarts.or(file.restarts).unwrap_or(100);
    let seed = require(args.seed.or(file.seed), "--seed")?;
    let out = require(args.out.or(file.out), "--out")?;
    if n_sites == 0 {
        return Err(CliError::Validation(
            "--n-sites must be at least 1".into(),
        ));
    }
    if !(args.obs_sd.is_finite() && args.obs_sd > 0.0) {
        return Err(CliError::Validation(format!(
            "--obs-sd must be positive, got {}",
            args.obs_sd
        )));
    }

    let (n_x, n_y) = parse_grid_dims(grid_dims)?;
    let ensemble = super::load_ensemble(&ensemble_path, args.d_theta.or(file.d_theta))?;
    if ensemble.d_eta() != n_x * n_y {
        return Err(CliError::Validation(format!(
            "grid {n_x}x{n_y} has {} sites but the ensemble has {} outputs",
            n_x * n_y,
            ensemble.d_eta()
        )));
    }
    let grid = SpatialGrid::lattice(n_x, n_y)?;
    let moments = compute_moments(&ensemble);
    let eta_samples = ensemble.eta_block().clone_owned();

    let (r_star, fitted) = match args.taper_r {
        Some(r) => {
            if !(r.is_finite() && r > 0.0) {
                return Err(CliError::Validation(format!(
                    "--taper-r must be positive, got {r}"
                )));
            }
            (r, false)
        }
        None => {
            let candidates = match args.taper_rs.as_deref() {
                Some(raw) => parse_float_list(raw, "--taper-rs")?,
                None => default_range_candidates(),
            };
            let fit = fit_taper_range(&eta_samples, &grid, &candidates)?;
            (fit.r_star, true)
        }
    };

    let taper = exponential_taper(&grid, r_star)?;
    let tapered = taper_apply(&moments.cov_eta_eta().clone_owned(), &taper)?;
    let problem = DesignProblem::new(
        &moments,
        tapered,
        args.obs_sd * args.obs_sd,
        grid.clone(),
        n_sites,
    )?;
    let design = fedorov_exchange(&problem, restarts, seed)?;

    let coords: Vec<[usize; 2]> = design
        .site_indices()
        .iter()
        .map(|&i| {
            let (col, row) = grid.lattice_coords(i).expect("lattice grid");
            [row, col]
        })
        .collect();

    let value = json!({
        "meta": meta("design", json!({
            "ensemble": crate::output::display(&ensemble_path),
            "grid_dims": format!("{n_x}x{n_y}"),
            "n_sites": n_sites,
            "restarts": restarts,
            "obs_sd": args.obs_sd,
            "taper_r_fitted": fitted,
            "seed": seed,
        })),
        "site_indices": design.site_indices(),
        "row_col_coords": coords,
        "log_det": design.criterion(),
        "r_star": r_star,
    });
    write_json(&out, &value)
}
