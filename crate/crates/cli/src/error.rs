use ogrg_core::CoreError;
use ogrg_geometry::GeometryError;
use ogrg_synth::SynthError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, config or refusal to overwrite (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, inconsistent or mismatched data (exit 2).
    #[error("{0}")]
    Data(String),
    /// Non-finite values or a failed gradient check (exit 3).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric(_) => CliError::Numeric(e.to_string()),
            CoreError::Config(_) => CliError::Usage(e.to_string()),
            CoreError::Synth(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Parameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
