use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty detection sample set")]
    EmptySampleSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{what} must be non-negative, got {value}")]
    NegativeInput { what: &'static str, value: f64 },

    #[error("yaw standard deviation {0} exceeds the tan singularity at pi/2")]
    YawSigmaOutOfRange(f64),

    #[error("covariance is not positive semi-definite (min eigenvalue {0})")]
    NotPsd(f64),

    #[error("internal consistency: {0}")]
    Inconsistency(String),

    #[error("unknown planner mode {0:?}")]
    UnknownMode(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
