//! Kalman-style calibration updates on joint `(theta, eta)` ensembles.
//!
//! Two posterior representations are provided. The Gaussian representation
//! fits a multivariate normal to the prior ensemble and conditions it on
//! the data analytically. The ensemble (perturbed-observation)
//! representation moves every member toward a noise-perturbed copy of the
//! data through the shared Kalman gain, yielding approximate posterior
//! draws whose first two moments match the Gaussian representation.
//!
//! The gain form `K = S_pr H' (H S_pr H' + S_y)^{-1}` is the canonical
//! computation path: the sample covariance is rank-deficient whenever
//! `m - 1 < p`, which is the common case here. The precision form
//! `S_post^{-1} = S_pr^{-1} + H' S_y^{-1} H` is kept as a cross-check for
//! invertible priors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{compute_moments, JointEnsemble, MomentEstimate};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::linalg::{cholesky_spd, symmetrize};
use crate::observation::ObservationModel;
use crate::sampling::{derive_seed, standard_normal_vector, substream_rng};

/// Gaussian posterior for the joint `(theta, eta)` vector.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    gain: DMatrix<f64>,
    d_theta: usize,
}

impl GaussianPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Kalman gain `p x n` matrix mapping innovation to state correction.
    pub fn kalman_gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn d_theta(&self) -> usize {
        self.d_theta
    }

    /// Parameter-block marginal `(mean, cov)`.
    pub fn theta_marginal(&self) -> (DVector<f64>, DMatrix<f64>) {
        (
            self.mean.rows(0, self.d_theta).clone_owned(),
            self.cov
                .view((0, 0), (self.d_theta, self.d_theta))
                .clone_owned(),
        )
    }

    /// Reinterpret as prior moments for a subsequent update stage.
    pub fn as_moments(&self) -> Result<MomentEstimate> {
        MomentEstimate::new(self.mean.clone(), self.cov.clone(), self.d_theta)
    }
}

/// Posterior ensemble produced by the perturbed-observation update.
#[derive(Debug, Clone)]
pub struct UpdatedEnsemble {
    members: JointEnsemble,
    perturbed_data: DMatrix<f64>,
    seed: u64,
}

impl UpdatedEnsemble {
    pub fn ensemble(&self) -> &JointEnsemble {
        &self.members
    }

    pub fn into_ensemble(self) -> JointEnsemble {
        self.members
    }

    /// The `m x n` matrix of perturbed data vectors `y_k`.
    pub fn perturbed_data(&self) -> &DMatrix<f64> {
        &self.perturbed_data
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn check_dims(moments_p: usize, obs: &ObservationModel) -> Result<()> {
    if obs.joint_dim() != moments_p {
        return Err(Error::DimensionMismatch(format!(
            "H has {} columns but the joint space has dimension {moments_p}",
            obs.joint_dim()
        )));
    }
    Ok(())
}

/// Shared gain computation: `K = S_pr H' (H S_pr H' + S_y)^{-1}`.
fn kalman_gain(moments: &MomentEstimate, obs: &ObservationModel) -> Result<DMatrix<f64>> {
    let h = obs.operator();
    let cov_ht = moments.cov() * h.transpose(); // p x n
    let mut innovation_cov = h * &cov_ht + obs.noise_cov(); // n x n
    symmetrize(&mut innovation_cov);
    let chol = cholesky_spd(&innovation_cov, "innovation covariance H S_pr H' + S_y")?;
    // K' = (H S_pr H' + S_y)^{-1} (S_pr H')'
    let gain_t = chol.solve(&cov_ht.transpose());
    Ok(gain_t.transpose())
}

/// Condition the fitted normal prior on the data: the Gaussian
/// representation of the EnKF.
///
/// Computes `mu_post = mu_pr + K (y - H mu_pr)` and
/// `S_post = S_pr - K H S_pr`, with `K` the Kalman gain.
///
/// ```
/// use enkf_cal_core::{gaussian_update, MomentEstimate, ObservationModel};
/// use nalgebra::{DMatrix, DVector};
///
/// // Scalar linear problem: eta = theta, observed as 0.8 +/- 0.1 against
/// // an N(0, 1) prior; the posterior is N(80/101, 1/101).
/// let moments = MomentEstimate::new(
///     DVector::zeros(2),
///     DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
///     1,
/// )?;
/// let obs = ObservationModel::scalar(0, 1, 1, 0.8, 0.01)?;
/// let posterior = gaussian_update(&moments, &obs)?;
/// let (mean, cov) = posterior.theta_marginal();
/// assert!((mean[0] - 80.0 / 101.0).abs() < 1e-12);
/// assert!((cov[(0, 0)] - 1.0 / 101.0).abs() < 1e-12);
/// # Ok::<(), enkf_cal_core::Error>(())
/// ```
pub fn gaussian_update(
    moments: &MomentEstimate,
    obs: &ObservationModel,
) -> Result<GaussianPosterior> {
    check_dims(moments.joint_dim(), obs)?;
    let gain = kalman_gain(moments, obs)?;
    let innovation = obs.data() - obs.operator() * moments.mean();
    let mean = moments.mean() + &gain * innovation;
    let mut cov = moments.cov() - &gain * (obs.operator() * moments.cov());
    symmetrize(&mut cov);
    Ok(GaussianPosterior {
        mean,
        cov,
        gain,
        d_theta: moments.d_theta(),
    })
}

/// Precision-form variant of [`gaussian_update`], valid only when the prior
/// covariance is invertible: `S_post^{-1} = S_pr^{-1} + H' S_y^{-1} H` and
/// `mu_post = S_post (S_pr^{-1} mu_pr + H' S_y^{-1} y)`.
///
/// Kept as an independent cross-check of the gain form; the two agree to
/// high relative accuracy for well-conditioned priors.
pub fn gaussian_update_precision(
    moments: &MomentEstimate,
    obs: &ObservationModel,
) -> Result<GaussianPosterior> {
    check_dims(moments.joint_dim(), obs)?;
    let p = moments.joint_dim();
    let h = obs.operator();

    let prior_chol = cholesky_spd(moments.cov(), "prior covariance")?;
    let prior_precision = prior_chol.solve(&DMatrix::identity(p, p));
    let noise_chol = cholesky_spd(obs.noise_cov(), "sigma_y")?;
    let noise_precision_h = noise_chol.solve(h);
    let noise_precision_y = noise_chol.solve(&DMatrix::from_column_slice(
        obs.obs_dim(),
        1,
        obs.data().as_slice(),
    ));

    let mut post_precision = prior_precision + h.transpose() * noise_precision_h;
    symmetrize(&mut post_precision);
    let post_chol = cholesky_spd(&post_precision, "posterior precision")?;
    let mut cov = post_chol.solve(&DMatrix::identity(p, p));
    symmetrize(&mut cov);

    let rhs = prior_chol.solve(&DMatrix::from_column_slice(p, 1, moments.mean().as_slice()))
        + h.transpose() * noise_precision_y;
    let mean = DVector::from_column_slice(post_chol.solve(&rhs).as_slice());

    let gain = kalman_gain(moments, obs)?;
    Ok(GaussianPosterior {
        mean,
        cov,
        gain,
        d_theta: moments.d_theta(),
    })
}

/// Perturbed-observation update: every member moves toward its own noisy
/// copy of the data through the shared Kalman gain,
/// `x_k <- x_k + K (y_k - H x_k)` with `y_k ~ N(y, S_y)`.
///
/// Member `k` draws its perturbation from substream `(seed, k)`, so the
/// result is reproducible and independent of evaluation order.
pub fn ensemble_update(
    ensemble: &JointEnsemble,
    obs: &ObservationModel,
    seed: u64,
) -> Result<UpdatedEnsemble> {
    check_dims(ensemble.joint_dim(), obs)?;
    let moments = compute_moments(ensemble);
    let gain = kalman_gain(&moments, obs)?;
    let noise_l = obs.noise_chol_l()?;

    let m = ensemble.size();
    let n = obs.obs_dim();

    // Members are independent given the shared gain; substream (seed, k)
    // makes the parallel result identical to sequential execution.
    let rows: Vec<(DVector<f64>, DVector<f64>)> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream_rng(seed, k as u64);
            let draw = obs.data() + &noise_l * standard_normal_vector(&mut rng, n);
            let member = ensemble.member(k);
            let innovation = &draw - obs.operator() * &member;
            let moved = member + &gain * innovation;
            (moved, draw)
        })
        .collect();

    let mut updated = DMatrix::zeros(m, ensemble.joint_dim());
    let mut perturbed = DMatrix::zeros(m, n);
    for (k, (moved, draw)) in rows.iter().enumerate() {
        updated.row_mut(k).copy_from(&moved.transpose());
        perturbed.row_mut(k).copy_from(&draw.transpose());
    }

    Ok(UpdatedEnsemble {
        members: JointEnsemble::new(updated, ensemble.d_theta(), ensemble.d_eta())?,
        perturbed_data: perturbed,
        seed,
    })
}

/// How the final stage of a multi-stage update reports its posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalStage {
    /// Return the updated ensemble itself.
    Ensemble,
    /// Fit and condition a normal at the last stage instead.
    Gaussian,
}

/// Multi-stage posterior: an ensemble, or a Gaussian from the final stage.
#[derive(Debug, Clone)]
pub enum MultistagePosterior {
    Ensemble(UpdatedEnsemble),
    Gaussian(GaussianPosterior),
}

impl MultistagePosterior {
    pub fn as_ensemble(&self) -> Option<&UpdatedEnsemble> {
        match self {
            MultistagePosterior::Ensemble(e) => Some(e),
            MultistagePosterior::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPosterior> {
        match self {
            MultistagePosterior::Gaussian(g) => Some(g),
            MultistagePosterior::Ensemble(_) => None,
        }
    }
}

/// Positive stage weights summing to one. Stage `s` sees the data with
/// noise covariance `sigma_y / w_s`, splitting the likelihood information
/// into fractions `w_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    weights: Vec<f64>,
}

impl StageSchedule {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("schedule has no stages".into()));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidArgument(
                "stage weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "stage weights must sum to 1, got {total}"
            )));
        }
        Ok(Self { weights })
    }

    /// `k` even splits; `even(2)` reproduces the observed-twice-with-twice-
    /// the-variance scheme.
    pub fn even(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("schedule has no stages".into()));
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stages(&self) -> usize {
        self.weights.len()
    }
}

/// Multi-stage perturbed-observation update.
///
/// Stage `s` applies [`ensemble_update`] with noise `sigma_y / w_s`.
/// Between stages the output block is recomputed by running the forward
/// model at every updated parameter vector, so the fitted normal is
/// re-anchored to the simulator over the narrowed parameter range. The
/// final stage either keeps the ensemble or fits a Gaussian, per
/// `final_stage`.
pub fn multistage_update(
    initial: &JointEnsemble,
    obs: &ObservationModel,
    schedule: &StageSchedule,
    forward: &dyn ForwardModel,
    seed: u64,
    final_stage: FinalStage,
) -> Result<MultistagePosterior> {
    check_dims(initial.joint_dim(), obs)?;
    if forward.d_theta() != initial.d_theta() || forward.d_eta() != initial.d_eta() {
        return Err(Error::DimensionMismatch(format!(
            "forward model maps {} -> {}, ensemble is ({}, {})",
            forward.d_theta(),
            forward.d_eta(),
            initial.d_theta(),
            initial.d_eta()
        )));
    }

    let last = schedule.stages() - 1;
    let mut current = initial.clone();
    for (s, &w) in schedule.weights().iter().enumerate() {
        let stage_obs = obs.with_noise_scaled(1.0 / w)?;
        let stage_seed = derive_seed(seed, s as u64);

        if s == last && final_stage == FinalStage::Gaussian {
            let posterior = gaussian_update(&compute_moments(&current), &stage_obs)?;
            return Ok(MultistagePosterior::Gaussian(posterior));
        }

        let updated = ensemble_update(&current, &stage_obs, stage_seed)?;
        if s == last {
            return Ok(MultistagePosterior::Ensemble(updated));
        }
        current = rerun_forward(updated.ensemble(), forward)?;
    }
    unreachable!("schedule has at least one stage");
}

/// Exact-moment multi-stage composition: applies [`gaussian_update`] stage
/// by stage, feeding each posterior back in as the next prior. No ensemble
/// and no forward reruns are involved; for any fixed operator this composes
/// to the single-stage posterior exactly (Gaussian Bayes identity), which
/// makes it the reference for stage-splitting correctness.
pub fn multistage_gaussian_update(
    moments: &MomentEstimate,
    obs: &ObservationModel,
    schedule: &StageSchedule,
) -> Result<GaussianPosterior> {
    let mut current = moments.clone();
    let mut posterior = None;
    for &w in schedule.weights() {
        let stage_obs = obs.with_noise_scaled(1.0 / w)?;
        let g = gaussian_update(&current, &stage_obs)?;
        current = g.as_moments()?;
        posterior = Some(g);
    }
    Ok(posterior.expect("schedule has at least one stage"))
}

/// Replace the eta block by fresh forward runs at each member's theta.
fn rerun_forward(ensemble: &JointEnsemble, forward: &dyn ForwardModel) -> Result<JointEnsemble> {
    let m = ensemble.size();
    let d_theta = ensemble.d_theta();
    let d_eta = ensemble.d_eta();
    let mut members = ensemble.members().clone();
    for k in 0..m {
        let theta = ensemble.member_theta(k);
        let eta = forward.evaluate(&theta).map_err(|e| Error::ForwardModel {
            member: k,
            source: Box::new(e),
        })?;
        if eta.len() != d_eta {
            return Err(Error::ForwardModel {
                member: k,
                source: Box::new(Error::DimensionMismatch(format!(
                    "forward returned {} outputs, expected {d_eta}",
                    eta.len()
                ))),
            });
        }
        for j in 0..d_eta {
            members[(k, d_theta + j)] = eta.0[j];
        }
    }
    JointEnsemble::new(members, d_theta, d_eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::ParameterVector;
    use crate::forward::LinearForward;
    use crate::observation::ObservationModel;
    use crate::sampling::derive_seed;
    use approx::assert_relative_eq;

    /// Joint moments for the scalar linear toy: eta = theta embedded as
    /// N(0, [[1, 1], [1, 1]]).
    fn linear_toy_moments() -> MomentEstimate {
        MomentEstimate::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            1,
        )
        .unwrap()
    }

    fn scalar_obs(y: f64, noise_var: f64) -> ObservationModel {
        ObservationModel::scalar(0, 1, 1, y, noise_var).unwrap()
    }

    #[test]
    fn linear_toy_matches_conjugate_posterior() {
        // Observing eta = theta with y = 0.8, noise 0.1^2 against an N(0,1)
        // prior gives theta | y ~ N(80/101, 1/101).
        let posterior = gaussian_update(&linear_toy_moments(), &scalar_obs(0.8, 0.01)).unwrap();
        let (mean, cov) = posterior.theta_marginal();
        assert_relative_eq!(mean[0], 80.0 / 101.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 0)], 1.0 / 101.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_operator_returns_prior() {
        let moments = linear_toy_moments();
        let obs = ObservationModel::new(
            DMatrix::zeros(1, 2),
            DVector::from_element(1, 0.8),
            DMatrix::from_element(1, 1, 0.01),
        )
        .unwrap();
        let posterior = gaussian_update(&moments, &obs).unwrap();
        assert_eq!(posterior.mean(), moments.mean());
        assert_eq!(posterior.cov(), moments.cov());
        assert!(posterior.kalman_gain().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn correlated_prior_hand_computation() {
        // Worked 2x2 example: S_pr = [[1, .9], [.9, 1]], innovation
        // variance 1.01, gain (0.9, 1)/1.01.
        let moments = MomentEstimate::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]),
            1,
        )
        .unwrap();
        let posterior = gaussian_update(&moments, &scalar_obs(0.8, 0.01)).unwrap();
        assert_relative_eq!(posterior.mean()[0], 0.9 * 0.8 / 1.01, epsilon = 1e-12);
        assert_relative_eq!(posterior.mean()[1], 0.8 / 1.01, epsilon = 1e-12);
        let expected_cov = [
            [1.0 - 0.81 / 1.01, 0.9 - 0.9 / 1.01],
            [0.9 - 0.9 / 1.01, 1.0 - 1.0 / 1.01],
        ];
        for (i, row) in expected_cov.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_relative_eq!(posterior.cov()[(i, j)], *want, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(posterior.mean()[0], 0.71287, epsilon = 1e-5);
        assert_relative_eq!(posterior.mean()[1], 0.79208, epsilon = 1e-5);
    }

    #[test]
    fn posterior_satisfies_precision_identity_when_invertible() {
        // S_post^{-1} = S_pr^{-1} + H' S_y^{-1} H, checked directly on the
        // gain-form result.
        let moments = MomentEstimate::new(
            DVector::from_vec(vec![0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[1.4, 0.5, 0.5, 0.9]),
            1,
        )
        .unwrap();
        let obs = scalar_obs(0.8, 0.01);
        let posterior = gaussian_update(&moments, &obs).unwrap();

        let post_precision = posterior
            .cov()
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DMatrix::identity(2, 2));
        let prior_precision = moments
            .cov()
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DMatrix::identity(2, 2));
        let h = obs.operator();
        let expected = prior_precision + h.transpose() * obs.noise_cov().clone().cholesky().unwrap().solve(h);
        let rel = (&post_precision - &expected).norm() / expected.norm();
        assert!(rel < 1e-8, "precision identity off by {rel}");
    }

    #[test]
    fn update_preserves_ensemble_shape() {
        let members = DMatrix::from_row_slice(4, 2, &[0.0, 0.5, 0.3, 0.6, -0.4, 0.3, 0.9, 0.8]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        let updated = ensemble_update(&ensemble, &scalar_obs(0.8, 0.04), 2).unwrap();
        assert_eq!(updated.ensemble().size(), 4);
        assert_eq!(updated.ensemble().joint_dim(), 2);
        assert_eq!(updated.perturbed_data().shape(), (4, 1));
        assert_eq!(updated.seed(), 2);

        let owned = updated.clone().into_ensemble();
        assert_eq!(&owned, updated.ensemble());
    }

    #[test]
    fn gain_and_precision_forms_agree_when_invertible() {
        let moments = MomentEstimate::new(
            DVector::from_vec(vec![0.3, -0.2, 1.0]),
            DMatrix::from_row_slice(
                3,
                3,
                &[2.0, 0.4, 0.1, 0.4, 1.5, -0.3, 0.1, -0.3, 1.2],
            ),
            1,
        )
        .unwrap();
        let obs = ObservationModel::incidence(
            &[0, 1],
            1,
            2,
            DVector::from_vec(vec![0.7, -0.1]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 0.08])),
        )
        .unwrap();

        let gain_form = gaussian_update(&moments, &obs).unwrap();
        let precision_form = gaussian_update_precision(&moments, &obs).unwrap();
        let mean_rel = (gain_form.mean() - precision_form.mean()).norm() / gain_form.mean().norm();
        let cov_rel = (gain_form.cov() - precision_form.cov()).norm() / gain_form.cov().norm();
        assert!(mean_rel < 1e-8, "mean deviation {mean_rel}");
        assert!(cov_rel < 1e-8, "cov deviation {cov_rel}");
    }

    #[test]
    fn observing_never_adds_variance() {
        let moments = MomentEstimate::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(
                3,
                3,
                &[1.0, 0.5, 0.2, 0.5, 2.0, -0.4, 0.2, -0.4, 0.8],
            ),
            1,
        )
        .unwrap();
        let obs = ObservationModel::scalar(1, 1, 2, 0.3, 0.2).unwrap();
        let posterior = gaussian_update(&moments, &obs).unwrap();
        let gap = moments.cov() - posterior.cov();
        let min_eig = gap.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-10 * moments.cov().trace());
    }

    #[test]
    fn huge_noise_leaves_members_in_place() {
        let members = DMatrix::from_row_slice(4, 2, &[0.1, 0.2, -0.3, 0.5, 0.7, -0.1, 0.4, 0.9]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        let updated = ensemble_update(&ensemble, &scalar_obs(0.8, 1e9 * 0.01), 42).unwrap();
        for k in 0..4 {
            for j in 0..2 {
                let before = ensemble.members()[(k, j)];
                let after = updated.ensemble().members()[(k, j)];
                assert!(
                    (after - before).abs() <= 1e-3 * before.abs().max(1.0),
                    "member {k} moved: {before} -> {after}"
                );
            }
        }
    }

    #[test]
    fn ensemble_update_bit_identical_across_runs() {
        let members = DMatrix::from_row_slice(3, 2, &[0.0, 0.1, 0.5, 0.4, -0.2, -0.3]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        let obs = scalar_obs(0.8, 0.01);
        let a = ensemble_update(&ensemble, &obs, 7).unwrap();
        let b = ensemble_update(&ensemble, &obs, 7).unwrap();
        assert_eq!(a.ensemble().members(), b.ensemble().members());
        assert_eq!(a.perturbed_data(), b.perturbed_data());
        let c = ensemble_update(&ensemble, &obs, 8).unwrap();
        assert_ne!(a.ensemble().members(), c.ensemble().members());
    }

    #[test]
    fn schedule_validation() {
        assert!(StageSchedule::new(vec![]).is_err());
        assert!(StageSchedule::new(vec![0.5, 0.6]).is_err());
        assert!(StageSchedule::new(vec![0.5, -0.5, 1.0]).is_err());
        assert!(StageSchedule::new(vec![0.25; 4]).is_ok());
        assert_eq!(StageSchedule::even(2).unwrap().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn two_even_stages_compose_to_single_update() {
        // Exact-moment propagation: conditioning twice on the data with
        // doubled noise equals one full-noise update.
        let moments = MomentEstimate::new(
            DVector::from_vec(vec![0.1, -0.4]),
            DMatrix::from_row_slice(2, 2, &[1.1, 0.7, 0.7, 0.9]),
            1,
        )
        .unwrap();
        let obs = scalar_obs(0.8, 0.01);
        let single = gaussian_update(&moments, &obs).unwrap();
        let staged =
            multistage_gaussian_update(&moments, &obs, &StageSchedule::even(2).unwrap()).unwrap();
        assert!((single.mean() - staged.mean()).abs().max() < 1e-10);
        assert!((single.cov() - staged.cov()).abs().max() < 1e-10);
    }

    #[test]
    fn uneven_three_stage_composition_also_exact() {
        let moments = linear_toy_moments();
        let obs = scalar_obs(0.8, 0.01);
        let single = gaussian_update(&moments, &obs).unwrap();
        let schedule = StageSchedule::new(vec![0.2, 0.5, 0.3]).unwrap();
        let staged = multistage_gaussian_update(&moments, &obs, &schedule).unwrap();
        assert!((single.mean() - staged.mean()).abs().max() < 1e-10);
        assert!((single.cov() - staged.cov()).abs().max() < 1e-10);
    }

    #[test]
    fn single_stage_multistage_is_ensemble_update() {
        let members = DMatrix::from_row_slice(4, 2, &[0.0, 0.5, 0.3, 0.6, -0.4, 0.3, 0.9, 0.8]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        let obs = scalar_obs(0.8, 0.04);
        let schedule = StageSchedule::even(1).unwrap();
        let forward = LinearForward::identity_1d();

        let staged = multistage_update(
            &ensemble,
            &obs,
            &schedule,
            &forward,
            11,
            FinalStage::Ensemble,
        )
        .unwrap();
        let direct = ensemble_update(&ensemble, &obs, derive_seed(11, 0)).unwrap();
        assert_eq!(
            staged.as_ensemble().unwrap().ensemble().members(),
            direct.ensemble().members()
        );
    }

    #[test]
    fn multistage_gaussian_final_returns_gaussian() {
        let members = DMatrix::from_row_slice(5, 2, &[0.0, 0.5, 0.3, 0.62, -0.4, 0.34, 0.9, 0.81, 0.2, 0.58]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        let obs = scalar_obs(0.8, 0.04);
        let schedule = StageSchedule::even(2).unwrap();
        let forward = LinearForward::identity_1d();

        let out = multistage_update(
            &ensemble,
            &obs,
            &schedule,
            &forward,
            5,
            FinalStage::Gaussian,
        )
        .unwrap();
        let gaussian = out.as_gaussian().expect("requested Gaussian final stage");
        assert_eq!(gaussian.mean().len(), 2);
        assert!(out.as_ensemble().is_none());
    }

    #[test]
    fn forward_failure_reports_member_index() {
        struct FailAt(f64);
        impl ForwardModel for FailAt {
            fn d_theta(&self) -> usize {
                1
            }
            fn d_eta(&self) -> usize {
                1
            }
            fn evaluate(&self, theta: &ParameterVector) -> crate::error::Result<crate::ensemble::OutputVector> {
                if theta.0[0] > self.0 {
                    Err(Error::InvalidArgument("out of domain".into()))
                } else {
                    Ok(crate::ensemble::OutputVector::from_slice(&[theta.0[0]]))
                }
            }
        }

        let members = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.2, 0.2, 5.0, 5.0]);
        let ensemble = JointEnsemble::new(members, 1, 1).unwrap();
        // Huge noise keeps members in place, so member 2 stays at 5.0 and
        // the stage-two rerun must fail there.
        let obs = scalar_obs(0.0, 1e12);
        let schedule = StageSchedule::even(2).unwrap();
        let err = multistage_update(
            &ensemble,
            &obs,
            &schedule,
            &FailAt(1.0),
            3,
            FinalStage::Ensemble,
        )
        .unwrap_err();
        match err {
            Error::ForwardModel { member, .. } => assert_eq!(member, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
