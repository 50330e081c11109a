use thiserror::Error;

use crate::sim::UserProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("unsupported time mode: {0}")]
    UnsupportedMode(String),

    #[error("kernel singularity at q = {q}")]
    Singularity { q: f64 },

    #[error("ill-posed instance: {0}")]
    IllPosed(String),

    #[error("quadrature did not converge: best estimate {best} with error {error}")]
    Convergence { best: f64, error: f64 },

    #[error("tolerance {tau} does not exceed twice the oracle half-width {half_width}")]
    StatisticalPower { tau: f64, half_width: f64 },

    #[error("inconclusive: {reason} ({} undecided profiles)", profiles.len())]
    Inconclusive {
        reason: String,
        profiles: Vec<UserProfile>,
    },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target {alpha} outside achievable range [{lo}, {hi}]")]
    OutOfRange { alpha: f64, lo: f64, hi: f64 },

    #[error("family does not bracket the target: {0}")]
    RichnessViolation(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("theorem violation: {0}")]
    TheoremViolation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn inconclusive(reason: impl Into<String>) -> Self {
        Error::Inconclusive {
            reason: reason.into(),
            profiles: Vec::new(),
        }
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Error::Inconclusive { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
