use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{path}:{line}: {msg}")]
    Record {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
