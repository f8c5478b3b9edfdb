use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}:{line}: {msg}")]
    Record {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("image {path}: {msg}")]
    Image { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;
