//! Agreement between the emulation paths and the exact-posterior oracles.

use enkf_cal_core::density::{default_grid, quadrature_posterior, DensityTable};
use enkf_cal_core::discrepancy::{estimate_lambda, lambda_log_posterior, GammaPrior};
use enkf_cal_core::emulator::{gp_posterior_density, linear_emulator, DesignRuns, GpConfig};
use enkf_cal_core::ensemble::{compute_moments, JointEnsemble};
use enkf_cal_core::forward::{toy_forward, ToyForward};
use enkf_cal_core::linalg::{linspace, trapezoid};
use enkf_cal_core::mcmc::mcmc_sampler;
use enkf_cal_core::observation::ObservationModel;
use enkf_cal_core::sampling::{standard_normal_vector, substream_rng, MvnSampler};
use enkf_cal_core::update::gaussian_update;
use nalgebra::{DMatrix, DVector};

/// Toy ensemble: theta from the standard normal prior, eta from the toy
/// forward map.
fn toy_ensemble(m: usize, seed: u64) -> JointEnsemble {
    let mut members = DMatrix::zeros(m, 2);
    for k in 0..m {
        let mut rng = substream_rng(seed, k as u64);
        let theta = standard_normal_vector(&mut rng, 1)[0];
        members[(k, 0)] = theta;
        members[(k, 1)] = toy_forward(theta);
    }
    JointEnsemble::new(members, 1, 1).unwrap()
}

#[test]
fn dense_gp_posterior_close_to_quadrature() {
    // 50 equally spaced runs on [-3, 3]: the conditioned GP tracks the
    // forward model tightly, so its posterior is within 0.02 total
    // variation of the quadrature oracle.
    let theta: Vec<f64> = linspace(-3.0, 3.0, 50);
    let eta: Vec<f64> = theta.iter().map(|&t| toy_forward(t)).collect();
    let runs = DesignRuns::new(theta, eta).unwrap();
    let config = GpConfig {
        mean_const: 0.5,
        signal_var: 0.25,
        lengthscale: 0.5,
        nugget: 1e-8,
    };

    let grid = default_grid();
    let gp = gp_posterior_density(0.8, 0.1, config, &runs, 1.0, &grid).unwrap();
    let exact = quadrature_posterior(&ToyForward, 0.8, 0.1, 0.0, 1.0, &grid).unwrap();
    let tv = gp.tv_distance(&exact).unwrap();
    assert!(tv < 0.02, "TV distance {tv}");
}

#[test]
fn sparse_gp_posterior_concentrates_where_emulator_matches_data() {
    // Four runs: posterior mass concentrates where the GP mean is within
    // two predictive standard deviations of the observation.
    let theta = vec![-1.5, -0.5, 0.5, 1.5];
    let eta: Vec<f64> = theta.iter().map(|&t| toy_forward(t)).collect();
    let runs = DesignRuns::new(theta, eta).unwrap();
    let config = GpConfig {
        mean_const: 0.5,
        signal_var: 0.25,
        lengthscale: 1.0,
        nugget: 0.0,
    };
    let grid = linspace(-6.0, 6.0, 4001);
    let table = gp_posterior_density(0.8, 0.1, config, &runs, 1.0, &grid).unwrap();

    let gp = enkf_cal_core::emulator::FittedGp::fit(config, &runs).unwrap();
    let mut mass_in_band = 0.0;
    let mut banded: Vec<f64> = Vec::with_capacity(grid.len());
    for (&t, &p) in grid.iter().zip(table.density()) {
        let (mu, v) = gp.predict(t);
        let spread = (v.max(0.0) + 0.01).sqrt();
        banded.push(if (0.8 - mu).abs() <= 2.0 * spread { p } else { 0.0 });
    }
    mass_in_band += trapezoid(&grid, &banded);
    assert!(mass_in_band > 0.9, "mass in band {mass_in_band}");
}

#[test]
fn metropolis_chain_matches_quadrature_on_toy_posterior() {
    let log_target = |theta: &DVector<f64>| {
        let t = theta[0];
        let resid = (0.8 - toy_forward(t)) / 0.1;
        -0.5 * (resid * resid + t * t)
    };
    let chain = mcmc_sampler(log_target, DVector::zeros(1), 100_000, 1.0, 77).unwrap();
    let kept = chain.scalar_post_burnin();

    // Histogram total-variation distance against the quadrature oracle.
    let exact = quadrature_posterior(&ToyForward, 0.8, 0.1, 0.0, 1.0, &default_grid()).unwrap();
    let (lo, hi, bins) = (-0.5, 2.0, 50);
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0.0f64; bins];
    for &s in &kept {
        if s >= lo && s < hi {
            let b = ((s - lo) / width) as usize;
            hist[b] += 1.0;
        }
    }
    for h in &mut hist {
        *h /= kept.len() as f64;
    }

    let grid = exact.grid();
    let dens = exact.density();
    let mut tv = 0.0;
    for (b, &observed) in hist.iter().enumerate() {
        let (a, z) = (lo + b as f64 * width, lo + (b + 1) as f64 * width);
        let mut mass = 0.0;
        for i in 1..grid.len() {
            if grid[i] > a && grid[i - 1] < z {
                let step = grid[i] - grid[i - 1];
                mass += 0.5 * (dens[i] + dens[i - 1]) * step;
            }
        }
        tv += (observed - mass).abs();
    }
    // Mass outside the histogram window counts toward the distance.
    let outside: f64 = 1.0 - hist.iter().sum::<f64>();
    tv += outside.abs();
    tv *= 0.5;
    assert!(tv < 0.05, "TV distance {tv}");
    assert!((0.2..0.7).contains(&chain.acceptance_rate()));
}

#[test]
fn linear_emulator_posterior_equals_joint_update_on_toy_ensemble() {
    let ensemble = toy_ensemble(500, 13);
    let moments = compute_moments(&ensemble);
    let obs = ObservationModel::scalar(0, 1, 1, 0.8, 0.01).unwrap();

    let joint = gaussian_update(&moments, &obs).unwrap();
    let (joint_mean, joint_cov) = joint.theta_marginal();

    let emulator = linear_emulator(&moments).unwrap();
    let (emu_mean, emu_cov) = emulator
        .conjugate_theta_posterior(
            &moments.mean_theta().clone_owned(),
            &moments.cov_theta_theta().clone_owned(),
            &obs,
        )
        .unwrap();

    let mean_rel = (emu_mean[0] - joint_mean[0]).abs() / joint_mean[0].abs();
    let var_rel = (emu_cov[(0, 0)] - joint_cov[(0, 0)]).abs() / joint_cov[(0, 0)];
    assert!(mean_rel < 0.01, "mean deviation {mean_rel}");
    assert!(var_rel < 0.01, "variance deviation {var_rel}");
}

#[test]
fn emulator_mean_through_quadrature_reproduces_joint_update() {
    // Scalar route: treat the emulator mean as the forward model, fold the
    // residual variance into the observation noise, and integrate. Both
    // computations are linear-Gaussian, so the quadrature answer matches
    // the joint update's parameter marginal.
    let ensemble = toy_ensemble(500, 13);
    let moments = compute_moments(&ensemble);
    let obs = ObservationModel::scalar(0, 1, 1, 0.8, 0.01).unwrap();

    let joint = gaussian_update(&moments, &obs).unwrap();
    let (joint_mean, joint_cov) = joint.theta_marginal();

    let emulator = linear_emulator(&moments).unwrap();
    let surrogate = emulator.to_forward();
    let inflated_sd = (0.01 + emulator.residual_cov()[(0, 0)]).sqrt();
    let prior_mean = moments.mean_theta()[0];
    let prior_sd = moments.cov_theta_theta()[(0, 0)].sqrt();
    let grid: Vec<f64> = linspace(
        prior_mean - 8.0 * prior_sd,
        prior_mean + 8.0 * prior_sd,
        200_001,
    );
    let table = quadrature_posterior(&surrogate, 0.8, inflated_sd, prior_mean, prior_sd, &grid)
        .unwrap();

    let mean_rel = (table.mean() - joint_mean[0]).abs() / joint_mean[0].abs();
    let var_rel = (table.variance() - joint_cov[(0, 0)]).abs() / joint_cov[(0, 0)];
    assert!(mean_rel < 0.01, "mean deviation {mean_rel}");
    assert!(var_rel < 0.01, "variance deviation {var_rel}");
}

#[test]
fn linear_emulator_posterior_equals_joint_update_multivariate() {
    // Multi-output case with 22 observed indices out of 55.
    let (d_theta, d_eta) = (5, 55);
    let p = d_theta + d_eta;
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] = 1.3 * (-((i as f64 - j as f64) / 12.0).powi(2)).exp();
        }
    }
    for i in 0..p {
        cov[(i, i)] += 0.05;
    }
    let sampler = MvnSampler::new(DVector::zeros(p), &cov).unwrap();
    let ensemble = JointEnsemble::new(sampler.sample_rows(128, 17), d_theta, d_eta).unwrap();
    let moments = compute_moments(&ensemble);

    let indices: Vec<usize> = (0..22).map(|i| 2 * i).collect();
    let y = DVector::from_fn(22, |i, _| 0.2 + 0.03 * i as f64);
    let sigma = DMatrix::from_diagonal(&DVector::from_element(22, 0.04));
    let obs = ObservationModel::incidence(&indices, d_theta, d_eta, y, sigma).unwrap();

    let joint = gaussian_update(&moments, &obs).unwrap();
    let (joint_mean, joint_cov) = joint.theta_marginal();
    let emulator = linear_emulator(&moments).unwrap();
    let (emu_mean, emu_cov) = emulator
        .conjugate_theta_posterior(
            &moments.mean_theta().clone_owned(),
            &moments.cov_theta_theta().clone_owned(),
            &obs,
        )
        .unwrap();

    let mean_rel = (&emu_mean - &joint_mean).norm() / joint_mean.norm();
    let cov_rel = (&emu_cov - &joint_cov).norm() / joint_cov.norm();
    assert!(mean_rel < 0.01, "mean deviation {mean_rel}");
    assert!(cov_rel < 0.01, "covariance deviation {cov_rel}");
}

/// Quadrature posterior mean of a single precision on a log grid.
fn lambda_quadrature_mean(
    y: f64,
    mean_eta: f64,
    cov_scalar: f64,
    prior: &GammaPrior,
) -> f64 {
    let y_vec = DVector::from_element(1, y);
    let mu_vec = DVector::from_element(1, mean_eta);
    let cov = DMatrix::from_element(1, 1, cov_scalar);
    let grid: Vec<f64> = linspace((1e-8f64).ln(), (1e4f64).ln(), 100_001);
    let mut log_vals = Vec::with_capacity(grid.len());
    for &u in &grid {
        let lambda = u.exp();
        let lp = lambda_log_posterior(&[lambda], &y_vec, &mu_vec, &cov, prior).unwrap();
        // Integrating over u = log(lambda) brings a Jacobian factor lambda.
        log_vals.push(lp + u);
    }
    let max = log_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_vals.iter().map(|v| (v - max).exp()).collect();
    let numer: Vec<f64> = weights
        .iter()
        .zip(&grid)
        .map(|(w, u)| w * u.exp())
        .collect();
    trapezoid(&grid, &numer) / trapezoid(&grid, &weights)
}

#[test]
fn lambda_posterior_mean_within_five_percent_of_quadrature() {
    let prior = GammaPrior::default();
    let (y, mean_eta, cov_scalar) = (2.0, 0.0, 0.5);
    let oracle = lambda_quadrature_mean(y, mean_eta, cov_scalar, &prior);

    let estimate = estimate_lambda(
        &DVector::from_element(1, y),
        &DVector::from_element(1, mean_eta),
        &DMatrix::from_element(1, 1, cov_scalar),
        1,
        prior,
        100_000,
        31,
    )
    .unwrap();
    let sampled = estimate.precisions.lambda[0];
    let rel = (sampled - oracle).abs() / oracle;
    assert!(
        rel < 0.05,
        "sampled {sampled} vs quadrature {oracle} (rel {rel})"
    );
}

#[test]
fn large_residual_pulls_lambda_below_prior_mean() {
    // A big data-model mismatch should demand more discrepancy variance,
    // i.e. a smaller precision than the prior mean.
    let prior = GammaPrior::default();
    let oracle = lambda_quadrature_mean(60.0, 0.0, 0.5, &prior);
    assert!(
        oracle < prior.mean(),
        "quadrature mean {oracle} not below prior mean {}",
        prior.mean()
    );

    let estimate = estimate_lambda(
        &DVector::from_element(1, 60.0),
        &DVector::zeros(1),
        &DMatrix::from_element(1, 1, 0.5),
        1,
        prior,
        60_000,
        5,
    )
    .unwrap();
    assert!(estimate.precisions.lambda[0] < prior.mean());
}

#[test]
fn toy_posterior_golden_values() {
    // Frozen from this quadrature oracle on the default grid (100_001
    // points over [-6, 6]); the computation is fully deterministic, so
    // these serve as tight regression anchors.
    let oracle = quadrature_posterior(&ToyForward, 0.8, 0.1, 0.0, 1.0, &default_grid()).unwrap();
    assert!((oracle.mean() - 0.8851459079868).abs() < 1e-9);
    assert!((oracle.variance() - 0.1597934536510).abs() < 1e-9);
    assert!((oracle.skewness() - 1.0957984651345).abs() < 1e-9);
    assert!((oracle.mode() - 0.75492).abs() < 1e-9);
}

#[test]
fn gp_and_quadrature_densities_integrate_to_one() {
    let theta = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
    let eta: Vec<f64> = theta.iter().map(|&t| toy_forward(t)).collect();
    let runs = DesignRuns::new(theta, eta).unwrap();
    let config = GpConfig {
        mean_const: 0.5,
        signal_var: 0.25,
        lengthscale: 1.0,
        nugget: 0.0,
    };
    let grid = default_grid();
    let gp = gp_posterior_density(0.8, 0.1, config, &runs, 1.0, &grid).unwrap();
    let exact = quadrature_posterior(&ToyForward, 0.8, 0.1, 0.0, 1.0, &grid).unwrap();
    assert!((gp.integral() - 1.0).abs() < 1e-6);
    assert!((exact.integral() - 1.0).abs() < 1e-6);
}

#[test]
fn flat_likelihood_limit_recovers_prior_for_both_paths() {
    let runs = DesignRuns::new(vec![-1.0, 0.0, 1.0], vec![0.3, 0.5, 0.7]).unwrap();
    let config = GpConfig {
        mean_const: 0.5,
        signal_var: 0.25,
        lengthscale: 1.0,
        nugget: 0.0,
    };
    let grid = default_grid();
    let gp = gp_posterior_density(0.8, 1e9, config, &runs, 1.0, &grid).unwrap();
    let quad =
        quadrature_posterior(&enkf_cal_core::LinearForward::identity_1d(), 0.8, 1e12, 0.0, 1.0, &grid)
            .unwrap();
    let prior = DensityTable::new(
        grid.clone(),
        grid.iter().map(|&t| (-0.5 * t * t).exp()).collect(),
    )
    .unwrap();
    assert!(gp.tv_distance(&prior).unwrap() < 1e-6);
    assert!(quad.tv_distance(&prior).unwrap() < 1e-6);
}
