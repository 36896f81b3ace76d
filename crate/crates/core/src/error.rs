use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("operation requires a bounded prior, got the Gaussian (replica-symmetric only) prior")]
    UnboundedPrior,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration cap exceeded: {needed} configurations requested, cap is {cap}")]
    CapExceeded { needed: f64, cap: u64 },

    #[error("observable references the planted spike but the instance is not spiked")]
    StarOnNull,

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    #[error("outside the valid region alpha*beta^2 < 1 (alpha*beta^2 = {0})")]
    OutsideValidRegion(f64),

    #[error("replica-symmetric solver did not converge: {0}")]
    NonConvergence(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed instance file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }

    /// Errors that come from numerical capacity or convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. }
                | Error::NonConvergence(_)
                | Error::OutsideValidRegion(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
