//! Shared fixtures for the benchmark suite.

use enkf_cal_core::sampling::MvnSampler;
use enkf_cal_core::taper::{exponential_taper, SpatialGrid};
use enkf_cal_core::{JointEnsemble, ObservationModel};
use nalgebra::{DMatrix, DVector};

/// Cosmology-shaped joint ensemble: 128 members of 5 parameters plus 55
/// outputs with smooth cross-correlations.
pub fn cosmology_shaped_ensemble() -> JointEnsemble {
    let (d_theta, d_eta) = (5, 55);
    let p = d_theta + d_eta;
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let d = (i as f64 - j as f64).abs();
            cov[(i, j)] = 1.2 * (-d / 15.0).exp();
        }
    }
    let sampler = MvnSampler::new(DVector::zeros(p), &cov).expect("spd");
    JointEnsemble::new(sampler.sample_rows(128, 7), d_theta, d_eta).expect("ensemble")
}

/// The 22-of-55 incidence observation used with the cosmology shape.
pub fn cosmology_observation() -> ObservationModel {
    let indices: Vec<usize> = (0..22).map(|i| i * 2).collect();
    let y = DVector::from_fn(22, |i, _| 0.1 * i as f64);
    let sigma = DMatrix::from_diagonal(&DVector::from_element(22, 0.05));
    ObservationModel::incidence(&indices, 5, 55, y, sigma).expect("observation")
}

/// Output-field samples on a lattice, for taper benchmarks.
pub fn field_samples(n_x: usize, n_y: usize, m: usize) -> (SpatialGrid, DMatrix<f64>) {
    let grid = SpatialGrid::lattice(n_x, n_y).expect("grid");
    let p = grid.len();
    let truth = exponential_taper(&grid, 4.0).expect("taper");
    let sampler = MvnSampler::new(DVector::zeros(p), truth.matrix()).expect("spd");
    let samples = sampler.sample_rows(m, 11);
    (grid, samples)
}
