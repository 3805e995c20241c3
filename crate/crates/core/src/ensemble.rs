//! Joint parameter-output ensembles and their sample moments.
//!
//! An ensemble holds `m` members, each the concatenation of a parameter
//! vector `theta` (length `d_theta`) and the matching simulator output
//! `eta` (length `d_eta`), in that fixed order. Sample moments computed
//! from the ensemble carry the same block layout, addressable through the
//! accessors on [`MomentEstimate`].

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// A model parameter vector `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub DVector<f64>);

impl ParameterVector {
    pub fn from_slice(values: &[f64]) -> Self {
        ParameterVector(DVector::from_row_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A simulator output vector `eta(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputVector(pub DVector<f64>);

impl OutputVector {
    pub fn from_slice(values: &[f64]) -> Self {
        OutputVector(DVector::from_row_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `m` joint `(theta, eta)` vectors stacked as rows of an `m x p` matrix,
/// `p = d_theta + d_eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEnsemble {
    members: DMatrix<f64>,
    d_theta: usize,
    d_eta: usize,
}

impl JointEnsemble {
    /// Build from a stacked member matrix. Requires `m >= 2`, finite
    /// entries, and `members.ncols() == d_theta + d_eta`.
    pub fn new(members: DMatrix<f64>, d_theta: usize, d_eta: usize) -> Result<Self> {
        let m = members.nrows();
        if m < 2 {
            return Err(Error::InsufficientEnsemble(m));
        }
        if d_theta == 0 || d_eta == 0 {
            return Err(Error::InvalidArgument(
                "d_theta and d_eta must both be at least 1".into(),
            ));
        }
        if members.ncols() != d_theta + d_eta {
            return Err(Error::DimensionMismatch(format!(
                "ensemble rows have length {}, expected d_theta + d_eta = {}",
                members.ncols(),
                d_theta + d_eta
            )));
        }
        if !members.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "ensemble members must be finite".into(),
            ));
        }
        Ok(Self {
            members,
            d_theta,
            d_eta,
        })
    }

    /// Build from per-member `(theta, eta)` pairs.
    pub fn from_pairs(pairs: &[(ParameterVector, OutputVector)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InsufficientEnsemble(pairs.len()));
        }
        let d_theta = pairs[0].0.len();
        let d_eta = pairs[0].1.len();
        let p = d_theta + d_eta;
        let mut members = DMatrix::zeros(pairs.len(), p);
        for (k, (theta, eta)) in pairs.iter().enumerate() {
            if theta.len() != d_theta || eta.len() != d_eta {
                return Err(Error::DimensionMismatch(format!(
                    "member {k} has shape ({}, {}), expected ({d_theta}, {d_eta})",
                    theta.len(),
                    eta.len()
                )));
            }
            for j in 0..d_theta {
                members[(k, j)] = theta.0[j];
            }
            for j in 0..d_eta {
                members[(k, d_theta + j)] = eta.0[j];
            }
        }
        Self::new(members, d_theta, d_eta)
    }

    pub fn size(&self) -> usize {
        self.members.nrows()
    }

    pub fn joint_dim(&self) -> usize {
        self.d_theta + self.d_eta
    }

    pub fn d_theta(&self) -> usize {
        self.d_theta
    }

    pub fn d_eta(&self) -> usize {
        self.d_eta
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    /// Member `k` as a joint row vector.
    pub fn member(&self, k: usize) -> DVector<f64> {
        self.members.row(k).transpose()
    }

    /// Parameter block of member `k`.
    pub fn member_theta(&self, k: usize) -> ParameterVector {
        ParameterVector(DVector::from_iterator(
            self.d_theta,
            (0..self.d_theta).map(|j| self.members[(k, j)]),
        ))
    }

    /// The `m x d_theta` parameter block.
    pub fn theta_block(&self) -> DMatrixView<'_, f64> {
        self.members.view((0, 0), (self.size(), self.d_theta))
    }

    /// The `m x d_eta` output block.
    pub fn eta_block(&self) -> DMatrixView<'_, f64> {
        self.members
            .view((0, self.d_theta), (self.size(), self.d_eta))
    }
}

/// Sample mean and covariance of a joint ensemble, partitioned into
/// `(theta, eta)` blocks.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    d_theta: usize,
    d_eta: usize,
}

impl MomentEstimate {
    /// Wrap an externally supplied mean and covariance. The covariance is
    /// symmetrized as `(S + S') / 2`.
    pub fn new(mean: DVector<f64>, mut cov: DMatrix<f64>, d_theta: usize) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {p}x{p}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if d_theta == 0 || d_theta >= p {
            return Err(Error::InvalidArgument(format!(
                "d_theta = {d_theta} must lie in [1, {})",
                p
            )));
        }
        symmetrize(&mut cov);
        Ok(Self {
            mean,
            cov,
            d_theta,
            d_eta: p - d_theta,
        })
    }

    pub fn joint_dim(&self) -> usize {
        self.d_theta + self.d_eta
    }

    pub fn d_theta(&self) -> usize {
        self.d_theta
    }

    pub fn d_eta(&self) -> usize {
        self.d_eta
    }

    /// Full joint mean.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Full joint covariance (symmetrized).
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Parameter-block mean.
    pub fn mean_theta(&self) -> DVectorView<'_, f64> {
        self.mean.rows(0, self.d_theta)
    }

    /// Output-block mean.
    pub fn mean_eta(&self) -> DVectorView<'_, f64> {
        self.mean.rows(self.d_theta, self.d_eta)
    }

    /// Parameter-parameter covariance block.
    pub fn cov_theta_theta(&self) -> DMatrixView<'_, f64> {
        self.cov.view((0, 0), (self.d_theta, self.d_theta))
    }

    /// Parameter-output covariance block.
    pub fn cov_theta_eta(&self) -> DMatrixView<'_, f64> {
        self.cov.view((0, self.d_theta), (self.d_theta, self.d_eta))
    }

    /// Output-parameter covariance block, the transpose of
    /// [`cov_theta_eta`](Self::cov_theta_eta) exactly (the covariance is
    /// symmetrized on construction).
    pub fn cov_eta_theta(&self) -> DMatrixView<'_, f64> {
        self.cov.view((self.d_theta, 0), (self.d_eta, self.d_theta))
    }

    /// Output-output covariance block.
    pub fn cov_eta_eta(&self) -> DMatrixView<'_, f64> {
        self.cov
            .view((self.d_theta, self.d_theta), (self.d_eta, self.d_eta))
    }
}

/// Sample mean and covariance of the ensemble, with divisor `m - 1`.
///
/// The covariance is symmetrized after accumulation so the block identity
/// `cov_eta_theta == cov_theta_eta'` holds exactly.
pub fn compute_moments(ensemble: &JointEnsemble) -> MomentEstimate {
    let (mean, cov) = crate::linalg::sample_mean_cov(ensemble.members());
    MomentEstimate {
        mean,
        cov,
        d_theta: ensemble.d_theta(),
        d_eta: ensemble.d_eta(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_point_ensemble() -> JointEnsemble {
        JointEnsemble::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]), 1, 1).unwrap()
    }

    #[test]
    fn rejects_single_member() {
        let err = JointEnsemble::new(DMatrix::from_row_slice(1, 2, &[0.0, 0.0]), 1, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientEnsemble(1)));
    }

    #[test]
    fn from_pairs_matches_stacked_layout() {
        let pairs = vec![
            (
                ParameterVector::from_slice(&[1.0, 2.0]),
                OutputVector::from_slice(&[3.0]),
            ),
            (
                ParameterVector::from_slice(&[4.0, 5.0]),
                OutputVector::from_slice(&[6.0]),
            ),
        ];
        let ens = JointEnsemble::from_pairs(&pairs).unwrap();
        assert_eq!(
            ens.members(),
            &DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        );
        assert_eq!(ens.member_theta(1), pairs[1].0);

        let ragged = vec![
            (
                ParameterVector::from_slice(&[1.0]),
                OutputVector::from_slice(&[3.0]),
            ),
            (
                ParameterVector::from_slice(&[4.0, 5.0]),
                OutputVector::from_slice(&[6.0]),
            ),
        ];
        assert!(JointEnsemble::from_pairs(&ragged).is_err());
    }

    #[test]
    fn two_point_moments() {
        // Members (0,0) and (2,2): mean (1,1), covariance all 2 with divisor m-1 = 1.
        let moments = compute_moments(&two_point_ensemble());
        assert_eq!(moments.mean(), &DVector::from_vec(vec![1.0, 1.0]));
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(moments.cov()[(i, j)], 2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn identical_members_give_zero_covariance() {
        let row = [0.3, -1.2, 4.5];
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&row);
        }
        let ens = JointEnsemble::new(DMatrix::from_row_slice(5, 3, &data), 1, 2).unwrap();
        let moments = compute_moments(&ens);
        assert_eq!(moments.mean(), &DVector::from_row_slice(&row));
        assert!(moments.cov().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn cosmology_shaped_moments_have_expected_dims() {
        // 128 members of 5 parameters + 55 outputs.
        let m = 128;
        let (d_theta, d_eta) = (5, 55);
        let p = d_theta + d_eta;
        let members = DMatrix::from_fn(m, p, |k, j| ((k * 31 + j * 7) % 17) as f64 * 0.1);
        let ens = JointEnsemble::new(members, d_theta, d_eta).unwrap();
        let moments = compute_moments(&ens);
        assert_eq!(moments.mean().len(), 60);
        assert_eq!(moments.cov().nrows(), 60);
        assert_eq!(moments.cov().ncols(), 60);
        assert_eq!(moments.cov_theta_eta().shape(), (5, 55));
        assert_eq!(moments.cov_eta_eta().shape(), (55, 55));
    }

    #[test]
    fn blocks_tile_the_joint_covariance() {
        let members = DMatrix::from_fn(6, 4, |k, j| (k as f64 + 1.0) * (j as f64 - 1.5));
        let ens = JointEnsemble::new(members, 1, 3).unwrap();
        let moments = compute_moments(&ens);
        let c = moments.cov();
        assert_eq!(moments.cov_theta_theta()[(0, 0)], c[(0, 0)]);
        for j in 0..3 {
            assert_eq!(moments.cov_theta_eta()[(0, j)], c[(0, 1 + j)]);
        }
        let te = moments.cov_theta_eta().clone_owned();
        let et = moments.cov_eta_theta().clone_owned();
        assert_eq!(et, te.transpose());
    }

    #[test]
    fn moments_permutation_invariant() {
        let members = DMatrix::from_fn(7, 3, |k, j| ((k * 13 + j * 5) % 11) as f64 - 3.0);
        let ens = JointEnsemble::new(members.clone(), 2, 1).unwrap();
        let mut permuted = members.clone();
        permuted.swap_rows(0, 6);
        permuted.swap_rows(2, 4);
        let ens_perm = JointEnsemble::new(permuted, 2, 1).unwrap();

        let a = compute_moments(&ens);
        let b = compute_moments(&ens_perm);
        assert_relative_eq!(a.mean(), b.mean(), epsilon = 1e-12);
        assert_relative_eq!(a.cov(), b.cov(), epsilon = 1e-12);
    }
}
