//! Computer-model calibration with the ensemble Kalman filter.
//!
//! The crate turns an ensemble of simulator runs, stacked as joint
//! `(theta, eta(theta))` vectors, into posterior estimates of the model
//! parameters given physical observations. It provides:
//!
//! - Gaussian and perturbed-observation ensemble updates, plus a
//!   multi-stage scheme that splits the likelihood across stages
//!   ([`update`]);
//! - a one-dimensional Gaussian-process emulator, exact quadrature and
//!   Metropolis posterior oracles, and the linear-regression emulator
//!   implicit in the ensemble update ([`emulator`], [`density`], [`mcmc`]);
//! - covariance tapering with maximum-likelihood range selection
//!   ([`taper`]);
//! - Bayesian D-optimal measurement-site selection by exhaustive search or
//!   Fedorov exchange ([`design`]);
//! - an EOF-based multi-output discrepancy model with per-output precision
//!   estimation ([`discrepancy`]);
//! - built-in forward models and tabulated-ensemble input ([`forward`],
//!   [`io`]).
//!
//! All stochastic operations take an explicit seed and are reproducible
//! bit-for-bit; see [`sampling`].

#![forbid(unsafe_code)]

pub mod density;
pub mod design;
pub mod discrepancy;
pub mod emulator;
pub mod ensemble;
pub mod error;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod observation;
pub mod sampling;
pub mod taper;
pub mod update;

pub use density::DensityTable;
pub use design::{Design, DesignProblem};
pub use discrepancy::{DiscrepancyPrecisions, EofBasis};
pub use emulator::{DesignRuns, GpConfig, LinearEmulator};
pub use ensemble::{compute_moments, JointEnsemble, MomentEstimate, OutputVector, ParameterVector};
pub use error::{Error, Result};
pub use forward::{run_ensemble, ForwardModel, IceSurrogate, LinearForward, ParameterBox, ToyForward};
pub use observation::{build_incidence, ObservationMode, ObservationModel};
pub use taper::{SpatialGrid, TaperMatrix};
pub use update::{
    ensemble_update, gaussian_update, gaussian_update_precision, multistage_gaussian_update,
    multistage_update, FinalStage, GaussianPosterior, MultistagePosterior, StageSchedule,
    UpdatedEnsemble,
};
