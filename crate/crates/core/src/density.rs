//! Gridded densities over a scalar parameter and the exact-posterior
//! quadrature oracle.

use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::ensemble::ParameterVector;
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::linalg::{linspace, trapezoid};

/// A normalized density tabulated on a strictly increasing grid. The
/// trapezoid-rule integral is 1 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    grid: Vec<f64>,
    density: Vec<f64>,
}

impl DensityTable {
    /// Normalize nonnegative values on `grid` into a density.
    pub fn new(grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} points, values {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let total = trapezoid(&grid, &values);
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numerical(format!(
                "density does not normalize: integral = {total}"
            )));
        }
        for v in &mut values {
            *v /= total;
        }
        Ok(Self {
            grid,
            density: values,
        })
    }

    /// Build from per-point log densities (up to a constant); the maximum
    /// is subtracted before exponentiation.
    pub fn from_log_density(grid: Vec<f64>, log_density: &[f64]) -> Result<Self> {
        if log_density.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numerical(
                "log density contains NaN or +inf".into(),
            ));
        }
        let max = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Numerical("log density is -inf everywhere".into()));
        }
        let values = log_density.iter().map(|v| (v - max).exp()).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(t, p)| t * p)
            .collect();
        trapezoid(&self.grid, &weighted)
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    /// Standardized third moment.
    pub fn skewness(&self) -> f64 {
        let m2 = self.central_moment(2);
        self.central_moment(3) / m2.powf(1.5)
    }

    fn central_moment(&self, order: i32) -> f64 {
        let mu = self.mean();
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(t, p)| (t - mu).powi(order) * p)
            .collect();
        trapezoid(&self.grid, &weighted)
    }

    /// Grid point with the largest density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.density.len() {
            if self.density[i] > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// Total-variation distance `0.5 * integral |p - q|`; both tables must
    /// share the same grid.
    pub fn tv_distance(&self, other: &DensityTable) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch(
                "total-variation distance requires a common grid".into(),
            ));
        }
        let diff: Vec<f64> = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(p, q)| (p - q).abs())
            .collect();
        Ok(0.5 * trapezoid(&self.grid, &diff))
    }

    /// Two-column CSV `theta,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,density")?;
        for (t, p) in self.grid.iter().zip(&self.density) {
            writeln!(out, "{t},{p}")?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Default quadrature grid: `[-6, 6]` with 100_001 points.
pub fn default_grid() -> Vec<f64> {
    linspace(-6.0, 6.0, 100_001)
}

/// Exact posterior of a scalar parameter by quadrature:
/// `pi(theta | y) ∝ exp{-(y - eta(theta))^2 / (2 sigma_y^2)} *
/// exp{-(theta - prior_mean)^2 / (2 prior_sd^2)}`,
/// trapezoid-normalized on `grid`.
///
/// Every grid point costs one forward run; evaluations run in parallel.
pub fn quadrature_posterior(
    forward: &dyn ForwardModel,
    y: f64,
    sigma_y: f64,
    prior_mean: f64,
    prior_sd: f64,
    grid: &[f64],
) -> Result<DensityTable> {
    if forward.d_theta() != 1 || forward.d_eta() != 1 {
        return Err(Error::DimensionMismatch(
            "quadrature oracle requires a scalar forward model".into(),
        ));
    }
    if !(sigma_y > 0.0 && prior_sd > 0.0) {
        return Err(Error::InvalidArgument(
            "sigma_y and prior_sd must be positive".into(),
        ));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    let max_step = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    if max_step > prior_sd / 100.0 {
        return Err(Error::InvalidArgument(format!(
            "grid step {max_step} too coarse; need <= prior_sd / 100 = {}",
            prior_sd / 100.0
        )));
    }

    let log_density: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let eta = forward.evaluate(&ParameterVector::from_slice(&[t]))?;
            let resid = (y - eta.0[0]) / sigma_y;
            let prior = (t - prior_mean) / prior_sd;
            Ok(-0.5 * (resid * resid + prior * prior))
        })
        .collect::<Result<Vec<f64>>>()?;

    DensityTable::from_log_density(grid.to_vec(), &log_density)
}
