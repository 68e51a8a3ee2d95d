use thiserror::Error;

#[derive(Debug, Error)]
pub enum IlcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported system: {0}")]
    UnsupportedSystem(String),

    #[error("frequency {omega} rad/s is outside [0, {nyquist}] rad/s")]
    FrequencyOutOfRange { omega: f64, nyquist: f64 },

    #[error("frequency response is singular at {omega} rad/s (z is an eigenvalue of A)")]
    SingularEvaluation { omega: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ill-conditioned FIR fit: normal-equation condition estimate {condition:.3e}")]
    IllConditionedFit { condition: f64 },

    #[error("circulant matrix is singular: near-zero DFT magnitude at frequency indices {indices:?}")]
    SingularCirculant { indices: Vec<usize> },

    #[error("matrix is singular and cannot be inverted")]
    SingularMatrix,

    #[error("largest singular value is not simple (gap {gap:.3e})")]
    NonsmoothPoint { gap: f64 },

    #[error("ILC run diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IlcError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(IlcError::InvalidParameter(msg.into()))
}
