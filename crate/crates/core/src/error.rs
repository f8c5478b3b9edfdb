use std::path::PathBuf;

use ogrg_tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    /// Malformed model input (text, image, depth, mask, label).
    #[error("input error: {0}")]
    Input(String),
    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),
    /// A caller broke an API contract.
    #[error("contract violated: {0}")]
    Contract(String),
    /// Non-finite loss, gradient or output.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("checkpoint was trained with config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error(transparent)]
    Synth(#[from] ogrg_synth::SynthError),
    #[error(transparent)]
    Geometry(#[from] ogrg_geometry::GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CoreError::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }
}
