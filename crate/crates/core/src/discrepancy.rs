//! Multi-output discrepancy model in EOF weight space.
//!
//! Output and observation fields are projected onto per-(output, season)
//! empirical orthogonal function bases estimated from a pilot run, with
//! weights scaled so pilot-run weight variance is 1. The observation
//! covariance in weight space is `sigma_y = I + sigma_delta`, where the
//! discrepancy term carries one precision `lambda_i` per output, constant
//! across that output's seasons and basis components. The precisions get
//! Gamma priors and are estimated by their posterior mean under
//!
//! `pi(lambda | y) ∝ |V|^{-1/2} exp{-(y - mu)' V^{-1} (y - mu) / 2}
//! prod_i lambda_i^{a-1} e^{-b lambda_i}`, `V = cov_ee + I + sigma_delta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_spd;
use crate::mcmc::mcmc_sampler;

/// Orthonormal basis and weight scaling for one (output, season) block.
#[derive(Debug, Clone)]
struct EofBlock {
    /// `field_len x k`, orthonormal columns.
    vectors: DMatrix<f64>,
    /// Per-component weight scale making pilot weight variance 1.
    scale: DVector<f64>,
}

impl EofBlock {
    /// Top-`k` principal directions of column-centered pilot snapshots
    /// (rows of `pilot`), scaled to unit pilot weight variance.
    fn from_pilot(pilot: &DMatrix<f64>, k: usize) -> Result<Self> {
        let t = pilot.nrows();
        let field_len = pilot.ncols();
        if k == 0 || t <= k {
            return Err(Error::InvalidArgument(format!(
                "need snapshots > k >= 1, got {t} snapshots and k = {k}"
            )));
        }
        if field_len < k {
            return Err(Error::InvalidArgument(format!(
                "field length {field_len} smaller than k = {k}"
            )));
        }

        let mean = pilot.row_mean();
        let mut centered = pilot.clone();
        for r in 0..t {
            for c in 0..field_len {
                centered[(r, c)] -= mean[c];
            }
        }

        let svd = centered.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not produce singular vectors".into()))?;
        let singular = &svd.singular_values;

        // Guard against rank deficiency: the k-th singular value must be
        // meaningfully nonzero.
        let tol = singular[0] * 1e-12 * t.max(field_len) as f64;
        if singular.len() < k || singular[k - 1] <= tol {
            return Err(Error::Numerical(format!(
                "pilot snapshots have rank below k = {k}"
            )));
        }

        let mut vectors = DMatrix::zeros(field_len, k);
        for j in 0..k {
            vectors.column_mut(j).copy_from(&v_t.row(j).transpose());
        }

        // Raw pilot weights; variance is centering-invariant.
        let weights = pilot * &vectors; // t x k
        let mut scale = DVector::zeros(k);
        for j in 0..k {
            let col = weights.column(j);
            let mu = col.mean();
            let var = col.iter().map(|w| (w - mu) * (w - mu)).sum::<f64>() / (t as f64 - 1.0);
            if var <= 0.0 {
                return Err(Error::Numerical(format!(
                    "pilot weight variance vanished for component {j}"
                )));
            }
            scale[j] = 1.0 / var.sqrt();
        }
        Ok(Self { vectors, scale })
    }

    fn project(&self, field: &[f64]) -> DVector<f64> {
        let x = DVector::from_row_slice(field);
        let raw = self.vectors.transpose() * x;
        raw.component_mul(&self.scale)
    }

    fn reconstruct(&self, weights: &[f64]) -> DVector<f64> {
        let w = DVector::from_row_slice(weights);
        let raw = w.component_div(&self.scale);
        &self.vectors * raw
    }
}

/// Scaled EOF bases for an `n_outputs x n_seasons` grid of field blocks.
///
/// A full field vector concatenates the blocks output-major (all seasons
/// of output 0, then output 1, ...); the weight vector uses layout index
/// `(output * n_seasons + season) * k + component`.
#[derive(Debug, Clone)]
pub struct EofBasis {
    blocks: Vec<EofBlock>,
    n_outputs: usize,
    n_seasons: usize,
    k: usize,
    field_len: usize,
}

/// Single-block EOF basis from pilot snapshots stacked as rows.
pub fn compute_eof(pilot_fields: &DMatrix<f64>, k: usize) -> Result<EofBasis> {
    EofBasis::from_pilot(pilot_fields, 1, 1, k)
}

impl EofBasis {
    /// Estimate one basis per (output, season) block from pilot snapshots
    /// of the full concatenated field: `pilot` is `T x (n_outputs *
    /// n_seasons * field_len)`.
    pub fn from_pilot(
        pilot: &DMatrix<f64>,
        n_outputs: usize,
        n_seasons: usize,
        k: usize,
    ) -> Result<Self> {
        if n_outputs == 0 || n_seasons == 0 {
            return Err(Error::InvalidArgument(
                "need at least one output and one season".into(),
            ));
        }
        let n_blocks = n_outputs * n_seasons;
        if !pilot.ncols().is_multiple_of(n_blocks) {
            return Err(Error::DimensionMismatch(format!(
                "pilot field length {} is not divisible into {n_blocks} blocks",
                pilot.ncols()
            )));
        }
        let field_len = pilot.ncols() / n_blocks;
        let mut blocks = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks {
            let slice = pilot.columns(b * field_len, field_len).clone_owned();
            blocks.push(EofBlock::from_pilot(&slice, k)?);
        }
        Ok(Self {
            blocks,
            n_outputs,
            n_seasons,
            k,
            field_len,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_seasons(&self) -> usize {
        self.n_seasons
    }

    pub fn components_per_block(&self) -> usize {
        self.k
    }

    /// Length of a full concatenated field vector.
    pub fn field_dim(&self) -> usize {
        self.blocks.len() * self.field_len
    }

    /// Length of a weight vector: `n_outputs * n_seasons * k`.
    pub fn weight_dim(&self) -> usize {
        self.blocks.len() * self.k
    }

    /// Basis vector `j` of block `b`, orthonormal within the block.
    pub fn basis_vector(&self, block: usize, j: usize) -> DVector<f64> {
        self.blocks[block].vectors.column(j).clone_owned()
    }

    /// Weight scale for component `j` of block `b`.
    pub fn weight_scale(&self, block: usize, j: usize) -> f64 {
        self.blocks[block].scale[j]
    }

    /// Project a full field onto the basis: scaled inner products with
    /// every block's basis vectors.
    pub fn project_field(&self, field: &DVector<f64>) -> Result<DVector<f64>> {
        if field.len() != self.field_dim() {
            return Err(Error::DimensionMismatch(format!(
                "field has length {}, basis expects {}",
                field.len(),
                self.field_dim()
            )));
        }
        let mut weights = DVector::zeros(self.weight_dim());
        for (b, block) in self.blocks.iter().enumerate() {
            let slice = field.as_slice();
            let w = block.project(&slice[b * self.field_len..(b + 1) * self.field_len]);
            weights.rows_mut(b * self.k, self.k).copy_from(&w);
        }
        Ok(weights)
    }

    /// Project every row of a field matrix, stacking weight rows.
    pub fn project_fields(&self, fields: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(fields.nrows(), self.weight_dim());
        for r in 0..fields.nrows() {
            let w = self.project_field(&fields.row(r).transpose())?;
            out.row_mut(r).copy_from(&w.transpose());
        }
        Ok(out)
    }

    /// Field reconstructed from weights: the orthogonal projection of the
    /// original field onto each block's basis span.
    pub fn reconstruct_field(&self, weights: &DVector<f64>) -> Result<DVector<f64>> {
        if weights.len() != self.weight_dim() {
            return Err(Error::DimensionMismatch(format!(
                "weights have length {}, basis expects {}",
                weights.len(),
                self.weight_dim()
            )));
        }
        let mut field = DVector::zeros(self.field_dim());
        for (b, block) in self.blocks.iter().enumerate() {
            let slice = weights.as_slice();
            let f = block.reconstruct(&slice[b * self.k..(b + 1) * self.k]);
            field.rows_mut(b * self.field_len, self.field_len).copy_from(&f);
        }
        Ok(field)
    }
}

/// Gamma prior on each discrepancy precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    /// The shipped default `Gamma(shape = 1, rate = 0.001)`.
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 0.001,
        }
    }
}

impl GammaPrior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Gamma prior needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }
}

/// Per-output discrepancy precisions with their prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyPrecisions {
    pub lambda: Vec<f64>,
    pub prior: GammaPrior,
}

/// Posterior-mean estimate of the precisions with chain diagnostics.
#[derive(Debug, Clone)]
pub struct LambdaEstimate {
    pub precisions: DiscrepancyPrecisions,
    pub acceptance_rate: f64,
    pub steps: usize,
}

/// Observation covariance `I + sigma_delta` in weight space: block-diagonal
/// with constant diagonal `1 + 1/lambda_i` on output `i`'s
/// `n_seasons * k` block.
pub fn sigma_y_from_lambda(
    lambda: &[f64],
    n_seasons: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    if lambda.is_empty() || n_seasons == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "need at least one output, season, and component".into(),
        ));
    }
    if lambda.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::InvalidArgument(
            "precisions must be positive and finite".into(),
        ));
    }
    let block = n_seasons * k;
    let dim = lambda.len() * block;
    let mut diag = DVector::zeros(dim);
    for (i, &l) in lambda.iter().enumerate() {
        for j in 0..block {
            diag[i * block + j] = 1.0 + 1.0 / l;
        }
    }
    Ok(DMatrix::from_diagonal(&diag))
}

/// Log posterior density of the precisions, up to a constant:
/// the Gaussian marginal likelihood of `y` with covariance
/// `V = cov_ee + I + sigma_delta` plus the Gamma prior terms.
pub fn lambda_log_posterior(
    lambda: &[f64],
    y: &DVector<f64>,
    mean_eta: &DVector<f64>,
    cov_ee: &DMatrix<f64>,
    prior: &GammaPrior,
) -> Result<f64> {
    prior.validate()?;
    let dim = y.len();
    if mean_eta.len() != dim || cov_ee.nrows() != dim || cov_ee.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "y has length {dim}, mean has {}, covariance is {:?}",
            mean_eta.len(),
            cov_ee.shape()
        )));
    }
    if lambda.is_empty() || !dim.is_multiple_of(lambda.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{dim} weights do not divide into {} output blocks",
            lambda.len()
        )));
    }
    if lambda.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::InvalidArgument(
            "precisions must be positive and finite".into(),
        ));
    }

    let block = dim / lambda.len();
    let mut v = cov_ee.clone();
    for (i, &l) in lambda.iter().enumerate() {
        for j in 0..block {
            let d = i * block + j;
            v[(d, d)] += 1.0 + 1.0 / l;
        }
    }
    let chol = cholesky_spd(&v, "lambda posterior covariance V")?;
    let logdet = crate::linalg::logdet_from_cholesky(&chol);
    let resid = y - mean_eta;
    let solved = chol.solve(&resid);
    let quad = resid.dot(&solved);

    let mut log_prior = 0.0;
    for &l in lambda {
        log_prior += (prior.shape - 1.0) * l.ln() - prior.rate * l;
    }
    Ok(-0.5 * logdet - 0.5 * quad + log_prior)
}

/// Posterior mean of the precisions by random-walk Metropolis on
/// `log lambda` (proposal scale `2.4 / sqrt(n_outputs)`), started at the
/// prior mean, first half discarded as burn-in. Deterministic given
/// `seed`.
pub fn estimate_lambda(
    y: &DVector<f64>,
    mean_eta: &DVector<f64>,
    cov_ee: &DMatrix<f64>,
    n_outputs: usize,
    prior: GammaPrior,
    steps: usize,
    seed: u64,
) -> Result<LambdaEstimate> {
    prior.validate()?;
    if n_outputs == 0 {
        return Err(Error::InvalidArgument("need at least one output".into()));
    }
    // Validate dimensions once up front so sampler failures can only be
    // numerical.
    lambda_log_posterior(&vec![prior.mean(); n_outputs], y, mean_eta, cov_ee, &prior)?;

    // Sample u = log(lambda); the change of variables contributes the
    // Jacobian sum(u).
    let log_target = |u: &DVector<f64>| -> f64 {
        let lambda: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        match lambda_log_posterior(&lambda, y, mean_eta, cov_ee, &prior) {
            Ok(lp) => lp + u.sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let init = DVector::from_element(n_outputs, prior.mean().ln());
    let proposal_sd = 2.4 / (n_outputs as f64).sqrt();
    let chain = mcmc_sampler(log_target, init, steps, proposal_sd, seed)?;

    let kept = chain.post_burnin();
    let mut lambda = vec![0.0; n_outputs];
    for u in kept {
        for i in 0..n_outputs {
            lambda[i] += u[i].exp();
        }
    }
    for l in &mut lambda {
        *l /= kept.len() as f64;
    }

    Ok(LambdaEstimate {
        precisions: DiscrepancyPrecisions { lambda, prior },
        acceptance_rate: chain.acceptance_rate(),
        steps,
    })
}
