use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid TT shape: {0}")]
    InvalidShape(String),

    #[error("matrix is not orthogonal: max |QᵀQ - I| = {defect:.3e}")]
    NotOrthogonal { defect: f64 },

    #[error("point violates finite-difference safety bounds: {0}")]
    UnsafePoint(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite loss {value} at {context}")]
    NonFiniteLoss { context: String, value: f64 },

    #[error("training diverged at epoch {epoch}: loss {loss:.3e}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("energy is unavailable for architecture {0}")]
    EnergyUnavailable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
