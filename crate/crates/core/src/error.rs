use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular or indefinite system: {0}")]
    Singularity(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    /// Adaptive integration could not make progress.
    #[error("integration diverged at t = {time}: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("simulation failed at t = {time}: {reason}")]
    Simulation { time: f64, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("normalisation undefined: ground truth has zero norm")]
    UndefinedNormalization,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at step {step}: {reason}")]
    Training { step: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
