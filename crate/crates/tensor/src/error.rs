use thiserror::Error;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// NaN or otherwise unusable numeric input.
    #[error("{op}: numeric error: {msg}")]
    Numeric { op: &'static str, msg: String },
    /// An operation parameter (scale, stride, batch size, ...) is out of range.
    #[error("{op}: invalid parameter: {msg}")]
    Parameter { op: &'static str, msg: String },
    /// A usage contract was violated (non-scalar loss, nondeterministic function, ...).
    #[error("contract violated: {0}")]
    Contract(String),
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Parameter {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Numeric {
            op,
            msg: msg.into(),
        }
    }
}
