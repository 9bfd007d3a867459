use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("fidelity level {0} is not registered in the model")]
    UnknownLevel(f64),

    #[error(
        "Gram matrix is not positive definite after jitter escalation \
         (n = {size}, last jitter = {jitter:.3e}, mean diagonal = {mean_diag:.3e}, \
         min diagonal = {min_diag:.3e})"
    )]
    CholeskyFailure {
        size: usize,
        jitter: f64,
        mean_diag: f64,
        min_diag: f64,
    },

    #[error("mean regression basis is rank deficient for the observed design ({0} observations)")]
    RankDeficientMean(usize),

    #[error("predictive variance k_n(x,x) + lambda(x) = {0:.3e} is not positive")]
    DegenerateVariance(f64),

    #[error("batch covariance matrix is singular after jitter escalation (q = {0})")]
    SingularBatch(usize),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("invalid design sizes: {0}")]
    InvalidSizes(String),

    #[error("initial parameter has a non-finite log posterior")]
    InitInvalid,

    #[error("trajectory never leaves zero; the log-displacement maximum is undefined")]
    AllZeroTrajectory,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
