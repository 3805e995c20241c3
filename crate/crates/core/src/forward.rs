//! Built-in forward models and parameter-space samplers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{ParameterVector, OutputVector};
use crate::error::{Error, Result};
use crate::sampling::substream_rng;
use rand::Rng;

/// A deterministic simulator mapping parameters to outputs.
pub trait ForwardModel: Sync {
    fn d_theta(&self) -> usize;
    fn d_eta(&self) -> usize;
    fn evaluate(&self, theta: &ParameterVector) -> Result<OutputVector>;
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Scalar toy problem `eta(theta) = Phi(theta)`: strictly increasing,
/// bounded in (0, 1), and concave past zero, so a tight observation near
/// the upper range produces a right-skewed posterior.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyForward;

/// Evaluate the toy map at a scalar parameter.
pub fn toy_forward(theta: f64) -> f64 {
    standard_normal_cdf(theta)
}

impl ForwardModel for ToyForward {
    fn d_theta(&self) -> usize {
        1
    }

    fn d_eta(&self) -> usize {
        1
    }

    fn evaluate(&self, theta: &ParameterVector) -> Result<OutputVector> {
        if theta.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "toy model is scalar, got {} parameters",
                theta.len()
            )));
        }
        let t = theta.0[0];
        if !t.is_finite() {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        Ok(OutputVector::from_slice(&[toy_forward(t)]))
    }
}

/// Affine map `eta(theta) = a + B theta`, the exactness reference: with a
/// Gaussian prior ensemble its calibration posterior is available in
/// closed form.
#[derive(Debug, Clone)]
pub struct LinearForward {
    offset: DVector<f64>,
    slope: DMatrix<f64>,
}

impl LinearForward {
    pub fn new(offset: DVector<f64>, slope: DMatrix<f64>) -> Result<Self> {
        if slope.nrows() != offset.len() {
            return Err(Error::DimensionMismatch(format!(
                "offset has length {}, slope has {} rows",
                offset.len(),
                slope.nrows()
            )));
        }
        Ok(Self { offset, slope })
    }

    /// Scalar identity `eta(theta) = theta`.
    pub fn identity_1d() -> Self {
        Self {
            offset: DVector::zeros(1),
            slope: DMatrix::identity(1, 1),
        }
    }
}

impl ForwardModel for LinearForward {
    fn d_theta(&self) -> usize {
        self.slope.ncols()
    }

    fn d_eta(&self) -> usize {
        self.slope.nrows()
    }

    fn evaluate(&self, theta: &ParameterVector) -> Result<OutputVector> {
        if theta.len() != self.slope.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.slope.ncols(),
                theta.len()
            )));
        }
        Ok(OutputVector(&self.offset + &self.slope * &theta.0))
    }
}

/// Ice-sheet thickness surrogate on a 36 x 30 lattice.
///
/// Site `(x, y)` carries log thickness
/// `log T = c0 + b(x, y) * (1 + c1 * (theta_2 - theta_1))` where the shape
/// factor `b >= 0` is largest in the sheet interior and vanishes on the
/// `x = 0` / `y = 0` edges, with `x` decreasing toward the open edge.
/// Thickness is monotone decreasing in `theta_1` (deformation) and
/// increasing in `theta_2` (heat conductivity) at every site.
#[derive(Debug, Clone)]
pub struct IceSurrogate {
    shape: Vec<f64>,
    n_x: usize,
    n_y: usize,
}

pub const ICE_GRID_NX: usize = 36;
pub const ICE_GRID_NY: usize = 30;
const ICE_BASE_LOG_THICKNESS: f64 = 1.0;
const ICE_PARAM_GAIN: f64 = 0.5;

impl Default for IceSurrogate {
    fn default() -> Self {
        Self::new()
    }
}

impl IceSurrogate {
    pub fn new() -> Self {
        let (n_x, n_y) = (ICE_GRID_NX, ICE_GRID_NY);
        let mut shape = Vec::with_capacity(n_x * n_y);
        for i in 0..(n_x * n_y) {
            let x = (i % n_x) as f64;
            let y = (i / n_x) as f64;
            let fx = x / n_x as f64;
            let fy = y / n_y as f64;
            shape.push(fx * fy * (1.0 - fy) * (1.0 - fx + 0.2));
        }
        let max = shape.iter().cloned().fold(f64::MIN, f64::max);
        for b in &mut shape {
            *b /= max;
        }
        Self { shape, n_x, n_y }
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.n_x, self.n_y)
    }
}

/// Log-thickness field for parameters `(theta_1, theta_2)` in `[0, 1]^2`.
pub fn synthetic_ice_thickness(theta_1: f64, theta_2: f64) -> Result<DVector<f64>> {
    let model = IceSurrogate::new();
    Ok(model
        .evaluate(&ParameterVector::from_slice(&[theta_1, theta_2]))?
        .0)
}

impl ForwardModel for IceSurrogate {
    fn d_theta(&self) -> usize {
        2
    }

    fn d_eta(&self) -> usize {
        self.n_x * self.n_y
    }

    fn evaluate(&self, theta: &ParameterVector) -> Result<OutputVector> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "ice surrogate takes 2 parameters, got {}",
                theta.len()
            )));
        }
        let (t1, t2) = (theta.0[0], theta.0[1]);
        for (name, t) in [("theta_1", t1), ("theta_2", t2)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {t} outside [0, 1]"
                )));
            }
        }
        let gain = 1.0 + ICE_PARAM_GAIN * (t2 - t1);
        let field = DVector::from_iterator(
            self.shape.len(),
            self.shape.iter().map(|b| ICE_BASE_LOG_THICKNESS + b * gain),
        );
        Ok(OutputVector(field))
    }
}

/// Rectangular parameter domain with per-coordinate bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "bound {i}: need lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Default 5-parameter cosmology box: spectral index, Hubble constant,
    /// fluctuation amplitude, dark matter density, baryonic matter density.
    pub fn cosmology_default() -> Self {
        Self {
            lower: vec![0.8, 0.5, 0.6, 0.0, 0.02],
            upper: vec![1.4, 1.1, 1.6, 0.6, 0.12],
        }
    }

    /// Unit square, the ice surrogate domain.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Run a forward model at every parameter draw and stack the
/// `(theta, eta(theta))` rows into a joint ensemble. A failed run aborts
/// with the offending member's index.
pub fn run_ensemble(
    forward: &dyn ForwardModel,
    thetas: &[ParameterVector],
) -> Result<crate::ensemble::JointEnsemble> {
    if thetas.len() < 2 {
        return Err(Error::InsufficientEnsemble(thetas.len()));
    }
    let d_theta = forward.d_theta();
    let d_eta = forward.d_eta();
    let mut members = DMatrix::zeros(thetas.len(), d_theta + d_eta);
    for (k, theta) in thetas.iter().enumerate() {
        if theta.len() != d_theta {
            return Err(Error::DimensionMismatch(format!(
                "member {k} has {} parameters, forward model expects {d_theta}",
                theta.len()
            )));
        }
        let eta = forward.evaluate(theta).map_err(|e| Error::ForwardModel {
            member: k,
            source: Box::new(e),
        })?;
        for j in 0..d_theta {
            members[(k, j)] = theta.0[j];
        }
        for j in 0..d_eta {
            members[(k, d_theta + j)] = eta.0[j];
        }
    }
    crate::ensemble::JointEnsemble::new(members, d_theta, d_eta)
}

/// Stratified Latin hypercube sample of `m` points: per coordinate, a
/// seeded permutation of strata with a uniform draw inside each stratum.
pub fn latin_hypercube(bounds: &ParameterBox, m: usize, seed: u64) -> Vec<ParameterVector> {
    let d = bounds.dim();
    let mut coords = vec![vec![0.0f64; m]; d];
    for (j, col) in coords.iter_mut().enumerate() {
        let mut rng = substream_rng(seed, j as u64);
        let mut strata: Vec<usize> = (0..m).collect();
        // Fisher-Yates with the substream generator.
        for i in (1..m).rev() {
            let pick = rng.random_range(0..=i);
            strata.swap(i, pick);
        }
        let width = (bounds.upper[j] - bounds.lower[j]) / m as f64;
        for (k, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random_range(0.0..1.0);
            col[k] = bounds.lower[j] + width * (s as f64 + u);
        }
    }
    (0..m)
        .map(|k| {
            ParameterVector(DVector::from_iterator(d, (0..d).map(|j| coords[j][k])))
        })
        .collect()
}

/// Best of `candidates` Latin hypercube draws under the maximin criterion
/// (largest minimum pairwise distance), each drawn from its own substream.
pub fn maximin_latin_hypercube(
    bounds: &ParameterBox,
    m: usize,
    candidates: usize,
    seed: u64,
) -> Vec<ParameterVector> {
    let mut best: Option<(f64, Vec<ParameterVector>)> = None;
    for c in 0..candidates.max(1) {
        let design = latin_hypercube(bounds, m, crate::sampling::derive_seed(seed, c as u64));
        let mut min_dist = f64::INFINITY;
        for i in 0..design.len() {
            for j in (i + 1)..design.len() {
                let d = (&design[i].0 - &design[j].0).norm();
                min_dist = min_dist.min(d);
            }
        }
        if best.as_ref().is_none_or(|(score, _)| min_dist > *score) {
            best = Some((min_dist, design));
        }
    }
    best.expect("at least one candidate").1
}
