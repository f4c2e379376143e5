use min_core::chain::{PovError, TxReject};
use min_core::data::DataError;
use min_core::IdError;
use thiserror::Error;

/// Failures reported by the command line, each with a stable kind string.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("transaction rejected: {}", .0.as_str())]
    Rejected(TxReject),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity check failed for {0}")]
    Integrity(String),
    #[error("{0}")]
    Usage(String),
    #[error("corrupt state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Identifier(#[from] IdError),
    #[error(transparent)]
    Consensus(#[from] PovError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Module(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Rejected(r) => r.as_str(),
            CliError::NotFound(_) => "NotFound",
            CliError::Integrity(_) => "IntegrityFailure",
            CliError::Usage(_) => "Usage",
            CliError::Corrupt(_) => "CorruptState",
            CliError::Identifier(_) => "BadIdentifier",
            CliError::Consensus(_) => "Consensus",
            CliError::Data(DataError::HashMismatch { .. }) => "IntegrityFailure",
            CliError::Data(_) => "Storage",
            CliError::Io(_) => "Io",
            CliError::Module(_) => "Module",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
