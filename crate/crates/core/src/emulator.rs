//! Emulators of the forward model: a one-dimensional Gaussian process and
//! the linear-regression surrogate implicit in the ensemble update.
//!
//! The GP takes the mean and covariance functions as fixed: a constant
//! mean and a squared-exponential kernel
//! `C(a, b) = signal_var * exp(-(a - b)^2 / (2 lengthscale^2))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::density::DensityTable;
use crate::ensemble::MomentEstimate;
use crate::error::{Error, Result};
use crate::forward::LinearForward;
use crate::linalg::{cholesky_spd, symmetrize};
use crate::observation::ObservationModel;

/// Fixed GP hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    /// Constant mean `m(.)`.
    pub mean_const: f64,
    /// Kernel variance at distance zero.
    pub signal_var: f64,
    /// Squared-exponential correlation length.
    pub lengthscale: f64,
    /// Diagonal noise added to the training kernel matrix.
    pub nugget: f64,
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.signal_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "signal_var must be positive, got {}",
                self.signal_var
            )));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "nugget must be nonnegative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.lengthscale;
        self.signal_var * (-0.5 * d * d).exp()
    }
}

/// A batch of forward-model runs: parameter settings and scalar outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRuns {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl DesignRuns {
    pub fn new(theta: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if theta.len() != eta.len() || theta.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter settings but {} outputs",
                theta.len(),
                eta.len()
            )));
        }
        if theta.iter().chain(eta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("runs must be finite".into()));
        }
        Ok(Self { theta, eta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// A GP conditioned on design runs, ready for prediction.
pub struct FittedGp {
    config: GpConfig,
    theta: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `K^{-1} (eta - m)` precomputed for the predictive mean.
    alpha: DVector<f64>,
}

impl FittedGp {
    /// Factor the training kernel matrix `C(theta, theta) + nugget I`.
    /// Duplicate design points with a zero nugget make it singular.
    pub fn fit(config: GpConfig, runs: &DesignRuns) -> Result<Self> {
        config.validate()?;
        let n = runs.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| config.kernel(runs.theta[i], runs.theta[j]));
        for i in 0..n {
            k[(i, i)] += config.nugget;
        }
        let chol = k.cholesky().ok_or_else(|| {
            Error::Numerical(
                "training kernel matrix is singular (duplicate design points with zero nugget?)"
                    .into(),
            )
        })?;
        let residual = DVector::from_iterator(n, runs.eta.iter().map(|e| e - config.mean_const));
        let alpha = chol.solve(&residual);
        Ok(Self {
            config,
            theta: runs.theta.clone(),
            chol,
            alpha,
        })
    }

    /// Predictive mean and variance at `theta`:
    /// `mu = C(theta, design) K^{-1} (eta - m) + m` and
    /// `v = C(theta, theta) - C(theta, design) K^{-1} C(design, theta)`.
    pub fn predict(&self, theta: f64) -> (f64, f64) {
        let k_star = DVector::from_iterator(
            self.theta.len(),
            self.theta.iter().map(|&t| self.config.kernel(theta, t)),
        );
        let mu = k_star.dot(&self.alpha) + self.config.mean_const;
        let v = self.config.kernel(theta, theta) - k_star.dot(&self.chol.solve(&k_star));
        (mu, v)
    }
}

/// One-shot conditioning: fit on `runs` and predict at `theta`.
pub fn gp_condition(config: GpConfig, runs: &DesignRuns, theta: f64) -> Result<(f64, f64)> {
    Ok(FittedGp::fit(config, runs)?.predict(theta))
}

/// Posterior for the scalar parameter with the forward model replaced by
/// the conditioned GP:
/// `pi(theta | y, runs) ∝ exp{-(y - mu_theta)^2 / (2 (v_theta + sigma_y^2))}
/// * exp{-theta^2 / (2 prior_sd^2)}`.
///
/// The grid must reach at least three prior standard deviations out on
/// both sides of zero.
pub fn gp_posterior_density(
    y: f64,
    sigma_y: f64,
    config: GpConfig,
    runs: &DesignRuns,
    prior_sd: f64,
    grid: &[f64],
) -> Result<DensityTable> {
    if !(sigma_y > 0.0 && prior_sd > 0.0) {
        return Err(Error::InvalidArgument(
            "sigma_y and prior_sd must be positive".into(),
        ));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if lo > -3.0 * prior_sd || hi < 3.0 * prior_sd {
        return Err(Error::InvalidArgument(format!(
            "grid [{lo}, {hi}] must cover +/- 3 prior standard deviations"
        )));
    }
    let gp = FittedGp::fit(config, runs)?;
    let log_density: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let (mu, v) = gp.predict(t);
            let total_var = v.max(0.0) + sigma_y * sigma_y;
            let prior = t / prior_sd;
            -0.5 * ((y - mu) * (y - mu) / total_var + prior * prior)
        })
        .collect();
    DensityTable::from_log_density(grid.to_vec(), &log_density)
}

/// The conditional-normal surrogate `eta | theta ~ N(intercept + slope
/// theta, residual_cov)` extracted from joint sample moments. This is the
/// emulator the ensemble update applies implicitly.
#[derive(Debug, Clone)]
pub struct LinearEmulator {
    intercept: DVector<f64>,
    slope: DMatrix<f64>,
    residual_cov: DMatrix<f64>,
}

/// Gaussian conditional of the output block on the parameter block:
/// `slope = cov_eta_theta * cov_theta_theta^{-1}`,
/// `intercept = mean_eta - slope * mean_theta`,
/// `residual_cov = cov_eta_eta - slope * cov_theta_eta`.
pub fn linear_emulator(moments: &MomentEstimate) -> Result<LinearEmulator> {
    let cov_tt = moments.cov_theta_theta().clone_owned();
    // No jitter rescue here: a singular parameter block means the ensemble
    // does not identify a regression and must be reported as such.
    let chol = cov_tt
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("parameter covariance block is singular".into()))?;
    let cov_te = moments.cov_theta_eta().clone_owned();
    // slope' = cov_tt^{-1} cov_te
    let slope = chol.solve(&cov_te).transpose();
    let intercept = moments.mean_eta().clone_owned() - &slope * moments.mean_theta().clone_owned();
    let mut residual_cov = moments.cov_eta_eta().clone_owned() - &slope * cov_te;
    symmetrize(&mut residual_cov);
    Ok(LinearEmulator {
        intercept,
        slope,
        residual_cov,
    })
}

impl LinearEmulator {
    pub fn intercept(&self) -> &DVector<f64> {
        &self.intercept
    }

    pub fn slope(&self) -> &DMatrix<f64> {
        &self.slope
    }

    pub fn residual_cov(&self) -> &DMatrix<f64> {
        &self.residual_cov
    }

    /// Conditional mean `intercept + slope * theta`.
    pub fn predict_mean(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.intercept + &self.slope * theta
    }

    /// The emulator mean as an affine forward model.
    pub fn to_forward(&self) -> LinearForward {
        LinearForward::new(self.intercept.clone(), self.slope.clone())
            .expect("emulator shapes are consistent")
    }

    /// Conjugate-normal parameter posterior from emulating the outputs:
    /// with `theta ~ N(prior_mean, prior_cov)` and data
    /// `y = H_eta eta + e`, the emulated observation is
    /// `y = H_eta (intercept + slope theta) + noise`, noise covariance
    /// `H_eta residual_cov H_eta' + sigma_y`. Returns the posterior
    /// `(mean, cov)` of `theta`.
    ///
    /// Feeding in the sample moments this emulator was built from
    /// reproduces the parameter marginal of the joint Gaussian update.
    pub fn conjugate_theta_posterior(
        &self,
        prior_mean: &DVector<f64>,
        prior_cov: &DMatrix<f64>,
        obs: &ObservationModel,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d_theta = self.slope.ncols();
        let d_eta = self.slope.nrows();
        if prior_mean.len() != d_theta || prior_cov.nrows() != d_theta {
            return Err(Error::DimensionMismatch(format!(
                "prior has dimension {}, emulator expects {d_theta}",
                prior_mean.len()
            )));
        }
        if obs.joint_dim() != d_theta + d_eta {
            return Err(Error::DimensionMismatch(format!(
                "observation operator acts on dimension {}, expected {}",
                obs.joint_dim(),
                d_theta + d_eta
            )));
        }
        // The emulated route only models observations of the outputs; an
        // operator touching the parameter block has no emulator analogue.
        let h_theta = obs.operator().view((0, 0), (obs.obs_dim(), d_theta));
        if h_theta.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument(
                "observation operator must not act on the parameter block".into(),
            ));
        }
        // Restriction of H to the eta block.
        let h_eta = obs
            .operator()
            .view((0, d_theta), (obs.obs_dim(), d_eta))
            .clone_owned();

        let design = &h_eta * &self.slope; // n x d_theta
        let mut noise_cov =
            &h_eta * &self.residual_cov * h_eta.transpose() + obs.noise_cov();
        symmetrize(&mut noise_cov);

        let design_prior = &design * prior_cov; // n x d_theta
        let mut innovation_cov = &design_prior * design.transpose() + noise_cov;
        symmetrize(&mut innovation_cov);
        let chol = cholesky_spd(&innovation_cov, "emulated innovation covariance")?;

        // gain = prior_cov design' innovation_cov^{-1}
        let gain = chol.solve(&design_prior).transpose(); // d_theta x n
        let predicted = &h_eta * &self.intercept + &design * prior_mean;
        let mean = prior_mean + &gain * (obs.data() - predicted);
        let mut cov = prior_cov - &gain * design_prior;
        symmetrize(&mut cov);
        Ok((mean, cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{compute_moments, JointEnsemble};
    use approx::assert_relative_eq;

    fn unit_config() -> GpConfig {
        GpConfig {
            mean_const: 0.0,
            signal_var: 1.0,
            lengthscale: 1.0,
            nugget: 0.0,
        }
    }

    #[test]
    fn single_run_conditioning_by_hand() {
        // One run at theta = 0 with output 1; predict at theta = lengthscale:
        // correlation e^{-1/2}, so mu = e^{-1/2} and v = 1 - e^{-1}.
        let runs = DesignRuns::new(vec![0.0], vec![1.0]).unwrap();
        let (mu, v) = gp_condition(unit_config(), &runs, 1.0).unwrap();
        assert_relative_eq!(mu, (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn interpolates_training_points_with_zero_nugget() {
        let runs = DesignRuns::new(vec![-1.5, -0.5, 0.5, 1.5], vec![0.2, 0.4, 0.7, 0.9]).unwrap();
        let gp = FittedGp::fit(unit_config(), &runs).unwrap();
        for j in 0..runs.len() {
            let (mu, v) = gp.predict(runs.theta[j]);
            assert_relative_eq!(mu, runs.eta[j], epsilon = 1e-8);
            assert!(v.abs() < 1e-8, "v = {v} at design point {j}");
            assert!(v >= -1e-10);
        }
    }

    #[test]
    fn duplicate_design_points_rejected_without_nugget() {
        let runs = DesignRuns::new(vec![0.3, 0.3], vec![0.5, 0.6]).unwrap();
        assert!(FittedGp::fit(unit_config(), &runs).is_err());
        let mut with_nugget = unit_config();
        with_nugget.nugget = 1e-6;
        assert!(FittedGp::fit(with_nugget, &runs).is_ok());
    }

    #[test]
    fn predictive_variance_shrinks_as_design_grows() {
        let full_theta: Vec<f64> = (0..8).map(|i| -2.0 + i as f64 * 0.55).collect();
        let full_eta: Vec<f64> = full_theta.iter().map(|t| t.sin()).collect();
        let probe = 0.37;
        let mut prev_v = f64::INFINITY;
        for n in 1..=8 {
            let runs =
                DesignRuns::new(full_theta[..n].to_vec(), full_eta[..n].to_vec()).unwrap();
            let (_, v) = gp_condition(unit_config(), &runs, probe).unwrap();
            assert!(
                v <= prev_v + 1e-8,
                "variance rose from {prev_v} to {v} at n = {n}"
            );
            prev_v = v;
        }
    }

    #[test]
    fn flat_likelihood_recovers_prior_density() {
        let runs = DesignRuns::new(vec![-1.0, 0.0, 1.0], vec![0.3, 0.5, 0.7]).unwrap();
        let grid = crate::linalg::linspace(-6.0, 6.0, 2001);
        let table =
            gp_posterior_density(0.8, 1e9, unit_config(), &runs, 1.0, &grid).unwrap();
        for (t, p) in table.grid().iter().zip(table.density()) {
            let prior = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((p - prior).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_cross_covariance_gives_constant_emulator() {
        // theta and eta columns vary independently in a balanced pattern,
        // making the sample cross-covariance exactly zero.
        let members = nalgebra::DMatrix::from_row_slice(
            4,
            2,
            &[-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0],
        );
        let ens = JointEnsemble::new(members, 1, 1).unwrap();
        let moments = compute_moments(&ens);
        let emu = linear_emulator(&moments).unwrap();
        assert_relative_eq!(emu.slope()[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(emu.intercept()[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(
            emu.residual_cov()[(0, 0)],
            moments.cov_eta_eta()[(0, 0)],
            epsilon = 1e-14
        );
    }

    #[test]
    fn exactly_linear_ensemble_recovered() {
        // eta = 2 + 3 theta with no noise.
        let thetas = [-1.0, -0.2, 0.4, 1.3, 2.0];
        let rows: Vec<f64> = thetas.iter().flat_map(|&t| [t, 2.0 + 3.0 * t]).collect();
        let ens =
            JointEnsemble::new(nalgebra::DMatrix::from_row_slice(5, 2, &rows), 1, 1).unwrap();
        let emu = linear_emulator(&compute_moments(&ens)).unwrap();
        assert_relative_eq!(emu.slope()[(0, 0)], 3.0, epsilon = 1e-10);
        assert_relative_eq!(emu.intercept()[0], 2.0, epsilon = 1e-10);
        assert!(emu.residual_cov()[(0, 0)].abs() < 1e-10);
    }
}
