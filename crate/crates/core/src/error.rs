use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("outcomes are required to fit a conditional mean")]
    MissingOutcomes,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance factorization failed even with diagonal jitter {jitter:e}")]
    CovarianceFactorizationFailure { jitter: f64 },

    #[error("empty group: {0}")]
    EmptyGroup(&'static str),

    #[error("bootstrap replicate {replicate} stayed degenerate after {attempts} resamples")]
    DegenerateResample { replicate: usize, attempts: usize },

    #[error("{failed} of {total} replications failed (limit is 1%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::CovarianceFactorizationFailure { .. }
                | Error::DegenerateResample { .. }
                | Error::TooManyFailures { .. }
                | Error::NonFinite(_)
        )
    }
}
