//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mode cap exceeded: {count} modes, cap {cap}")]
    ModeCapExceeded { count: usize, cap: usize },

    #[error("zero-frequency mode with nonzero coefficient: {0}")]
    ZeroFrequencyMode(String),

    #[error("field is not mean-zero: {0}")]
    NotMeanZero(String),

    #[error("mode k = ({0}, {1}, {2}) outside the resolvable band for N = {3}")]
    OutsideBand(i64, i64, i64, usize),

    #[error("CFL violation: dt = {dt:.3e} exceeds bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("numerical blowup at t = {t:.6e}: {what}")]
    Blowup { t: f64, what: String },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("Picard iteration diverged after {iters} steps (increment ratios {ratios:?})")]
    PicardDivergence { iters: usize, ratios: Vec<f64> },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
