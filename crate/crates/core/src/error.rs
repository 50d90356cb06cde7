use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("enumeration of {0} sequences exceeds the cap of {1}")]
    Capacity(u128, u128),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("eigensolver did not converge after {0} sweeps")]
    Eigen(usize),
    #[error("divergence at step {step}: |theta| = {norm:e}")]
    Divergence { step: usize, norm: f64 },
    #[error("precondition violated at step {step}: {reason}")]
    Precondition { step: usize, reason: String },
    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted { epoch: usize, reason: String, dump: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Parameter(msg.into()))
}
