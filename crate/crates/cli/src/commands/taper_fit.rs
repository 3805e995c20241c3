use enkf_cal_core::taper::{default_range_candidates, fit_taper_range, SpatialGrid};
use serde_json::{json, Value};

use crate::config::{parse_float_list, parse_grid_dims, require, FileConfig, TaperFitArgs};
use crate::output::{meta, write_json};
use crate::{CliError, CliResult};

pub fn run(args: TaperFitArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let ensemble_path = require(args.ensemble.or(file.ensemble), "--ensemble")?;
    let grid_dims = require(args.grid_dims.as_deref(), "--grid-dims")?;
    let out = require(args.out.or(file.out), "--out")?;

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
    let candidates = match args.taper_rs.as_deref() {
        Some(raw) => parse_float_list(raw, "--taper-rs")?,
        None => default_range_candidates(),
    };

    let fit = fit_taper_range(&ensemble.eta_block().clone_owned(), &grid, &candidates)?;
    let curve: Vec<Value> = fit
        .curve
        .iter()
        .map(|(r, ll)| json!([r, ll]))
        .collect();

    let value = json!({
        "meta": meta("taper-fit", json!({
            "ensemble": crate::output::display(&ensemble_path),
            "grid_dims": format!("{n_x}x{n_y}"),
            "candidates": candidates,
        })),
        "r_star": fit.r_star,
        "loglik_curve": curve,
    });
    write_json(&out, &value)
}
