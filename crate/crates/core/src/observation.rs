//! Observation operators and measurement noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, require_finite, require_finite_vec};

/// How the observation operator was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationMode {
    /// Each row selects exactly one output entry (one-hot in the eta block).
    Incidence,
    /// Arbitrary real `n x p` operator.
    General,
}

/// Measurement model `y = H x + e`, `e ~ N(0, sigma_y)`, acting on joint
/// `(theta, eta)` vectors of length `p`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    h: DMatrix<f64>,
    y: DVector<f64>,
    sigma_y: DMatrix<f64>,
    mode: ObservationMode,
}

/// One-hot observation operator selecting `selected_output_indices` from the
/// eta block of a joint vector: row `i` is 1 at column `d_theta + index_i`.
pub fn build_incidence(
    selected_output_indices: &[usize],
    d_theta: usize,
    d_eta: usize,
) -> Result<DMatrix<f64>> {
    let n = selected_output_indices.len();
    let mut seen = vec![false; d_eta];
    let mut h = DMatrix::zeros(n, d_theta + d_eta);
    for (row, &idx) in selected_output_indices.iter().enumerate() {
        if idx >= d_eta {
            return Err(Error::InvalidArgument(format!(
                "observed index {idx} out of range for d_eta = {d_eta}"
            )));
        }
        if seen[idx] {
            return Err(Error::InvalidArgument(format!(
                "observed index {idx} is duplicated"
            )));
        }
        seen[idx] = true;
        h[(row, d_theta + idx)] = 1.0;
    }
    Ok(h)
}

impl ObservationModel {
    /// General-mode model with an arbitrary operator.
    pub fn new(h: DMatrix<f64>, y: DVector<f64>, sigma_y: DMatrix<f64>) -> Result<Self> {
        Self::with_mode(h, y, sigma_y, ObservationMode::General)
    }

    /// Incidence-mode model observing the given eta indices.
    pub fn incidence(
        selected_output_indices: &[usize],
        d_theta: usize,
        d_eta: usize,
        y: DVector<f64>,
        sigma_y: DMatrix<f64>,
    ) -> Result<Self> {
        let h = build_incidence(selected_output_indices, d_theta, d_eta)?;
        Self::with_mode(h, y, sigma_y, ObservationMode::Incidence)
    }

    fn with_mode(
        h: DMatrix<f64>,
        y: DVector<f64>,
        sigma_y: DMatrix<f64>,
        mode: ObservationMode,
    ) -> Result<Self> {
        let n = h.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has length {}, H has {n} rows",
                y.len()
            )));
        }
        if sigma_y.nrows() != n || sigma_y.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "sigma_y is {}x{}, expected {n}x{n}",
                sigma_y.nrows(),
                sigma_y.ncols()
            )));
        }
        require_finite(&h, "H")?;
        require_finite_vec(&y, "y")?;
        require_finite(&sigma_y, "sigma_y")?;
        // SPD check: sigma_y must admit a Cholesky factorization as-is.
        if sigma_y.clone().cholesky().is_none() {
            return Err(Error::Numerical(
                "sigma_y is not symmetric positive-definite".into(),
            ));
        }
        Ok(Self {
            h,
            y,
            sigma_y,
            mode,
        })
    }

    /// Convenience constructor for a scalar observation of one eta entry.
    pub fn scalar(
        output_index: usize,
        d_theta: usize,
        d_eta: usize,
        y: f64,
        noise_var: f64,
    ) -> Result<Self> {
        Self::incidence(
            &[output_index],
            d_theta,
            d_eta,
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, noise_var),
        )
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.sigma_y
    }

    pub fn mode(&self) -> ObservationMode {
        self.mode
    }

    /// Number of observations.
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Joint-space dimension the operator acts on.
    pub fn joint_dim(&self) -> usize {
        self.h.ncols()
    }

    /// Same observation with the noise covariance scaled by `factor`;
    /// multi-stage updates use `factor = 1 / w_s`.
    pub fn with_noise_scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Self {
            h: self.h.clone(),
            y: self.y.clone(),
            sigma_y: &self.sigma_y * factor,
            mode: self.mode,
        })
    }

    /// Cholesky factor of the noise covariance, used to draw perturbed data.
    pub(crate) fn noise_chol_l(&self) -> Result<DMatrix<f64>> {
        Ok(cholesky_spd(&self.sigma_y, "sigma_y")?.l())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_incidence_is_zero_one() {
        // d_theta = 1, d_eta = 1, observe output 0: H = (0, 1).
        let h = build_incidence(&[0], 1, 1).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }

    #[test]
    fn full_selection_is_zero_identity() {
        let d_theta = 2;
        let d_eta = 4;
        let idx: Vec<usize> = (0..d_eta).collect();
        let h = build_incidence(&idx, d_theta, d_eta).unwrap();
        assert_eq!(h.view((0, 0), (4, 2)), DMatrix::zeros(4, 2));
        assert_eq!(h.view((0, 2), (4, 4)), DMatrix::identity(4, 4));
    }

    #[test]
    fn cosmology_shape() {
        let idx: Vec<usize> = (0..22).map(|i| i * 2).collect();
        let h = build_incidence(&idx, 5, 55).unwrap();
        assert_eq!(h.shape(), (22, 60));
        for row in 0..22 {
            assert_eq!(h.row(row).iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(h.row(row).sum(), 1.0);
        }
    }

    #[test]
    fn incidence_extracts_selected_entries() {
        let h = build_incidence(&[2, 0], 1, 3).unwrap();
        let joint = DVector::from_vec(vec![9.0, 10.0, 11.0, 12.0]);
        let picked = &h * &joint;
        assert_eq!(picked, DVector::from_vec(vec![12.0, 10.0]));
    }

    #[test]
    fn duplicate_and_out_of_range_rejected() {
        assert!(build_incidence(&[1, 1], 1, 3).is_err());
        assert!(build_incidence(&[3], 1, 3).is_err());
    }

    #[test]
    fn non_spd_noise_rejected() {
        let h = build_incidence(&[0, 1], 1, 2).unwrap();
        let y = DVector::zeros(2);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = ObservationModel::new(h, y, sigma).unwrap_err();
        assert!(err.is_numerical());
    }
}
