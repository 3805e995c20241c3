//! Bayesian D-optimal selection of measurement sites.
//!
//! A design is a set of `n` sites at which the output field will be
//! measured. Under the fitted joint normal with tapered output covariance,
//! the parameter posterior covariance for a design with restricted
//! incidence operator `H_eta` is
//!
//! `cov_post = cov_tt - cov_te H_eta' (H_eta tapered H_eta' + noise)^{-1}
//! H_eta cov_et`,
//!
//! which costs only an `n x n` solve. D-optimality minimizes
//! `log det cov_post`, the design with the largest prior-to-posterior
//! Shannon information gain. Small instances are solved exactly by
//! enumeration; larger ones by Fedorov's exchange heuristic with random
//! restarts.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensemble::MomentEstimate;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, logdet_from_cholesky, symmetrize};
use crate::sampling::substream_rng;
use crate::taper::SpatialGrid;
use rand::Rng;

/// Improvements below this threshold do not count as a better swap.
const EXCHANGE_TOL: f64 = 1e-12;

/// Exhaustive search refuses instances with more candidate designs than
/// this.
const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// A D-optimal design search instance.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    cov_tt: DMatrix<f64>,
    cov_te: DMatrix<f64>,
    tapered_cov: DMatrix<f64>,
    obs_noise_var: f64,
    grid: SpatialGrid,
    n: usize,
}

impl DesignProblem {
    /// `moments` supplies the parameter blocks; `tapered_cov` replaces the
    /// raw output-output block; measurements at the chosen sites carry
    /// independent noise of variance `obs_noise_var`.
    pub fn new(
        moments: &MomentEstimate,
        tapered_cov: DMatrix<f64>,
        obs_noise_var: f64,
        grid: SpatialGrid,
        n: usize,
    ) -> Result<Self> {
        let p_eta = moments.d_eta();
        if tapered_cov.nrows() != p_eta || tapered_cov.ncols() != p_eta {
            return Err(Error::DimensionMismatch(format!(
                "tapered covariance is {:?}, output block has dimension {p_eta}",
                tapered_cov.shape()
            )));
        }
        if grid.len() != p_eta {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} sites, output block has dimension {p_eta}",
                grid.len()
            )));
        }
        if !(obs_noise_var.is_finite() && obs_noise_var > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observation noise variance must be positive, got {obs_noise_var}"
            )));
        }
        if n == 0 || n > p_eta {
            return Err(Error::InvalidArgument(format!(
                "design size {n} must lie in [1, {p_eta}]"
            )));
        }
        Ok(Self {
            cov_tt: moments.cov_theta_theta().clone_owned(),
            cov_te: moments.cov_theta_eta().clone_owned(),
            tapered_cov,
            obs_noise_var,
            grid,
            n,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn candidate_count(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Parameter posterior covariance for measurements at `site_indices`.
    /// The empty design returns the prior parameter block.
    pub fn posterior_param_cov(&self, site_indices: &[usize]) -> Result<DMatrix<f64>> {
        self.validate_indices(site_indices)?;
        let d = self.cov_tt.nrows();
        if site_indices.is_empty() {
            return Ok(self.cov_tt.clone());
        }
        let n = site_indices.len();

        // H_eta tapered H_eta' + noise I: an n x n gather, no matmul.
        let mut system = DMatrix::zeros(n, n);
        for (a, &i) in site_indices.iter().enumerate() {
            for (b, &j) in site_indices.iter().enumerate() {
                system[(a, b)] = self.tapered_cov[(i, j)];
            }
            system[(a, a)] += self.obs_noise_var;
        }
        // cov_te H_eta': d x n gather.
        let mut cross = DMatrix::zeros(d, n);
        for (a, &i) in site_indices.iter().enumerate() {
            for row in 0..d {
                cross[(row, a)] = self.cov_te[(row, i)];
            }
        }

        let chol = cholesky_spd(&system, "design measurement system")?;
        let solved = chol.solve(&cross.transpose()); // n x d
        let mut post = &self.cov_tt - &cross * solved;
        symmetrize(&mut post);
        Ok(post)
    }

    /// D-criterion `log det posterior_param_cov`; lower is better.
    pub fn d_criterion(&self, site_indices: &[usize]) -> Result<f64> {
        let post = self.posterior_param_cov(site_indices)?;
        let chol = cholesky_spd(&post, "posterior parameter covariance")?;
        Ok(logdet_from_cholesky(&chol))
    }

    fn validate_indices(&self, site_indices: &[usize]) -> Result<()> {
        let p = self.grid.len();
        let mut seen = vec![false; p];
        for &i in site_indices {
            if i >= p {
                return Err(Error::InvalidArgument(format!(
                    "site index {i} out of range for {p} sites"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "site index {i} is duplicated"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// A selected set of measurement sites with its criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    site_indices: Vec<usize>,
    criterion: f64,
}

impl Design {
    /// Sorted site indices.
    pub fn site_indices(&self) -> &[usize] {
        &self.site_indices
    }

    /// `log det` of the parameter posterior covariance.
    pub fn criterion(&self) -> f64 {
        self.criterion
    }
}

fn binomial(p: usize, n: usize) -> u128 {
    let n = n.min(p - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = acc.saturating_mul((p - i) as u128) / (i + 1) as u128;
        if acc > EXHAUSTIVE_LIMIT {
            return u128::MAX;
        }
    }
    acc
}

/// Global minimizer by scanning every `n`-subset in lexicographic order.
/// Ties keep the lexicographically smallest index set. Errors when the
/// instance has more than a million candidate designs.
pub fn exhaustive_design(problem: &DesignProblem) -> Result<Design> {
    let p = problem.candidate_count();
    let n = problem.n_sites();
    if binomial(p, n) > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search over C({p}, {n}) designs exceeds the 10^6 limit"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut best: Option<Design> = None;
    loop {
        let criterion = problem.d_criterion(&indices)?;
        // Strict improvement keeps the first (lexicographically smallest) tie.
        if best.as_ref().is_none_or(|b| criterion < b.criterion) {
            best = Some(Design {
                site_indices: indices.clone(),
                criterion,
            });
        }
        // Advance to the next combination.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one design evaluated"));
            }
            pos -= 1;
            if indices[pos] != pos + p - n {
                break;
            }
        }
        indices[pos] += 1;
        for later in (pos + 1)..n {
            indices[later] = indices[later - 1] + 1;
        }
    }
}

/// Fedorov exchange from `restarts` random starting designs.
///
/// Each restart repeatedly scans all (selected, unselected) pairs, applies
/// the single most-improving swap (improvement must exceed `1e-12` in the
/// criterion), and stops when a full pass finds none. Among equal swaps
/// the lowest swap-in index wins; among restarts, ties keep the lowest
/// restart index. Restart `t` draws its start from substream `(seed, t)`,
/// so parallel and sequential execution return the same design.
pub fn fedorov_exchange(problem: &DesignProblem, restarts: usize, seed: u64) -> Result<Design> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }

    let outcomes: Vec<Result<Design>> = (0..restarts)
        .into_par_iter()
        .map(|t| exchange_from_random_start(problem, seed, t))
        .collect();

    let mut best: Option<Design> = None;
    for outcome in outcomes {
        let design = outcome?;
        if best.as_ref().is_none_or(|b| design.criterion < b.criterion) {
            best = Some(design);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn random_subset(p: usize, n: usize, seed: u64, restart: u64) -> Vec<usize> {
    let mut rng = substream_rng(seed, restart);
    let mut pool: Vec<usize> = (0..p).collect();
    for i in 0..n {
        let pick = rng.random_range(i..p);
        pool.swap(i, pick);
    }
    let mut subset = pool[..n].to_vec();
    subset.sort_unstable();
    subset
}

fn exchange_from_random_start(
    problem: &DesignProblem,
    seed: u64,
    restart: usize,
) -> Result<Design> {
    let p = problem.candidate_count();
    let n = problem.n_sites();
    let mut selected = random_subset(p, n, seed, restart as u64);
    let mut in_set = vec![false; p];
    for &i in &selected {
        in_set[i] = true;
    }
    let mut current = problem.d_criterion(&selected)?;

    loop {
        let mut best_swap: Option<(f64, usize, usize)> = None; // (criterion, in, out position)
        for (swap_in, taken) in in_set.iter().enumerate() {
            if *taken {
                continue;
            }
            for pos in 0..n {
                let removed = selected[pos];
                selected[pos] = swap_in;
                let criterion = problem.d_criterion(&selected)?;
                selected[pos] = removed;
                if criterion < current - EXCHANGE_TOL
                    && best_swap.is_none_or(|(b, _, _)| criterion < b)
                {
                    best_swap = Some((criterion, swap_in, pos));
                }
            }
        }
        match best_swap {
            Some((criterion, swap_in, pos)) => {
                in_set[selected[pos]] = false;
                in_set[swap_in] = true;
                selected[pos] = swap_in;
                selected.sort_unstable();
                current = criterion;
            }
            None => break,
        }
    }

    Ok(Design {
        site_indices: selected,
        criterion: current,
    })
}
