use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad user input: grid bounds, model parameters, operation domains.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The explicit scheme produced non-finite or runaway values.
    #[error("numerical instability at t = {t} (step {step}): {reason}")]
    Unstable { t: f64, step: u64, reason: String },

    /// The branching population outgrew the configured particle cap.
    #[error("population truncated: {population} particles exceeds cap {cap} at t = {t}")]
    Truncated { population: usize, cap: usize, t: f64 },

    /// A Monte Carlo estimate is too noisy to support the requested comparison.
    #[error("insufficient Monte Carlo precision: {0}")]
    Precision(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Unstable { .. } | Error::Truncated { .. } | Error::Precision(_))
    }
}
