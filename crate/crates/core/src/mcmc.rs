//! Random-walk Metropolis sampler used as a posterior oracle.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::root_rng;

/// A Metropolis chain with its acceptance diagnostics.
#[derive(Debug, Clone)]
pub struct McmcChain {
    samples: Vec<DVector<f64>>,
    accepted: usize,
}

impl McmcChain {
    /// All post-step states, one per step.
    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    /// Second half of the chain; the first half is treated as burn-in.
    pub fn post_burnin(&self) -> &[DVector<f64>] {
        &self.samples[self.samples.len() / 2..]
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.samples.len() as f64
    }

    /// Post-burn-in samples of a scalar chain.
    pub fn scalar_post_burnin(&self) -> Vec<f64> {
        self.post_burnin().iter().map(|x| x[0]).collect()
    }

    /// Componentwise mean of the post-burn-in samples.
    pub fn posterior_mean(&self) -> DVector<f64> {
        let kept = self.post_burnin();
        let dim = kept[0].len();
        let mut acc = DVector::zeros(dim);
        for x in kept {
            acc += x;
        }
        acc / kept.len() as f64
    }
}

/// Random-walk Metropolis with an isotropic normal proposal of standard
/// deviation `proposal_sd`. Deterministic given `seed`.
///
/// `log_target` is the log density up to an additive constant; it must be
/// finite at `init`.
pub fn mcmc_sampler<F>(
    log_target: F,
    init: DVector<f64>,
    steps: usize,
    proposal_sd: f64,
    seed: u64,
) -> Result<McmcChain>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(proposal_sd.is_finite() && proposal_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "proposal_sd must be finite and nonnegative, got {proposal_sd}"
        )));
    }
    let mut current = init;
    let mut current_log = log_target(&current);
    if !current_log.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "log target not finite at the initial point: {current_log}"
        )));
    }

    let mut rng = root_rng(seed);
    let dim = current.len();
    let mut samples = Vec::with_capacity(steps);
    let mut accepted = 0;

    for _ in 0..steps {
        let proposal = DVector::from_iterator(
            dim,
            current.iter().map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + proposal_sd * z
            }),
        );
        let proposal_log = log_target(&proposal);
        let log_u: f64 = rng.random::<f64>().ln();
        if proposal_log.is_finite() && log_u < proposal_log - current_log {
            current = proposal;
            current_log = proposal_log;
            accepted += 1;
        }
        samples.push(current.clone());
    }

    Ok(McmcChain { samples, accepted })
}
