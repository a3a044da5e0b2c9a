use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Input data that does not have the required shape.
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: arm {arm} has no rows")]
    EmptyArm { path: PathBuf, arm: &'static str },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] resilience_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 bad input data, 3 numerical failure, 4 bad
    /// configuration, 1 anything else (I/O on outputs).
    pub fn exit_code(&self) -> i32 {
        use resilience_core::Error as E;
        match self {
            CliError::Schema { .. } | CliError::EmptyArm { .. } => 2,
            CliError::Config(_) => 4,
            CliError::Core(E::InvalidParameter(_) | E::DimensionMismatch { .. }) => 4,
            CliError::Core(E::EmptyGroup(_) | E::MissingOutcomes | E::LengthMismatch { .. }) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}
