//! Error type shared by all calibration modules.

use thiserror::Error;

/// Errors produced by ensemble construction, updates, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Ensembles need at least two members to define a sample covariance.
    #[error("ensemble must have at least 2 members, got {0}")]
    InsufficientEnsemble(usize),

    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A tabulated input could not be parsed. Rows and columns are 1-based
    /// and count the header row.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse {
        row: usize,
        col: usize,
        msg: String,
    },

    /// A linear-algebra step failed (non-SPD system after jitter retry,
    /// singular matrix, non-finite intermediate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A forward model failed while re-running an ensemble member.
    #[error("forward model failed at member {member}: {source}")]
    ForwardModel {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad
    /// inputs. Callers that distinguish exit codes key off this.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::ForwardModel { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
