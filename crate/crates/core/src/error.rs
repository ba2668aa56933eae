use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {quantity} at step {step}")]
    Diverged { step: usize, quantity: String },

    #[error("non-finite force on particle {0}")]
    NonFiniteForce(usize),

    #[error("missing adjoint data for kernel {kernel:?} at step {step}")]
    MissingAdjoint { kernel: String, step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("finite-difference estimate for parameter {0} is not finite")]
    NonFiniteDifference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numerics (instability) rather than
    /// by bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(self, SimError::Diverged { .. } | SimError::NonFiniteForce(_))
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
