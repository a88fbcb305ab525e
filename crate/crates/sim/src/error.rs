use std::path::PathBuf;

use phocnn_core::Error as CoreError;

/// Errors of the command-line front end. Each class maps to its own exit
/// code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed IDX file {}: {reason}", path.display())]
    MalformedIdx { path: PathBuf, reason: String },
    #[error("malformed checkpoint {}: {reason}", path.display())]
    MalformedCheckpoint { path: PathBuf, reason: String },
    #[error("{0}")]
    Diverged(CoreError),
    #[error("checkpoint does not match the network: {0}")]
    ShapeMismatch(String),
    #[error("invalid device sheet: {0}")]
    InvalidSheet(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::MissingFile(_) => 4,
            CliError::MalformedIdx { .. } => 5,
            CliError::Diverged(_) => 6,
            CliError::ShapeMismatch(_) => 7,
            CliError::InvalidSheet(_) => 8,
            CliError::MalformedCheckpoint { .. } => 9,
            CliError::Io { .. } => 10,
            CliError::Core(_) => 11,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(path)
        } else {
            CliError::Io { path, source }
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } => CliError::Diverged(e),
            CoreError::EmptyDataset => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
