use thiserror::Error;

/// Errors raised by the decision engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no observations")]
    NoObservations,

    #[error("insufficient data for predictive: {channel} channel needs lambda > 0, nu > 0 and beta > 0")]
    InsufficientPredictive { channel: &'static str },

    /// Predictive variance (and everything built on it) needs lambda > 1,
    /// i.e. at least three observations under the improper prior.
    #[error("insufficient data: {channel} channel needs lambda > 1 (got lambda = {lambda})")]
    InsufficientData { channel: &'static str, lambda: f64 },

    #[error("variance undefined: lambda must exceed 1 (got {lambda})")]
    VarianceUndefined { lambda: f64 },

    #[error("moments undefined for J = {0}: need J > 2")]
    MomentsUndefined(usize),

    #[error("maximum-likelihood estimate needs at least 2 observations (got {0})")]
    TooFewForMle(usize),

    #[error("infeasible action: {0}")]
    InfeasibleAction(&'static str),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("condition vacuous/unattainable: inverse-normal argument {0} outside (0, 1)")]
    Unattainable(f64),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Qualify the field of a parameter error with the section it came from.
    pub fn within(self, section: &str) -> Self {
        match self {
            Error::InvalidParameter { field, message } => Error::InvalidParameter {
                field: format!("{section}.{field}"),
                message,
            },
            other => other,
        }
    }

    /// The offending field, for parameter errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidParameter { field, .. } => Some(field),
            _ => None,
        }
    }
}
