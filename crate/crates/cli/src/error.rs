use std::path::PathBuf;
use std::process::ExitCode;

use elcpd::ElError;
use thiserror::Error;

/// Errors surfaced by the command line, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("line {line}: non-numeric value '{value}' in column '{column}'")]
    NonNumeric { line: u64, column: String, value: String },

    #[error("line {line}: missing value in column '{column}' (pass --drop-missing to remove such rows)")]
    Missing { line: u64, column: String },

    #[error(transparent)]
    Numerical(ElError),

    #[error("config: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::NonNumeric { .. } => 4,
            CliError::Missing { .. } => 5,
            CliError::Numerical(_) => 6,
            CliError::Config(_) => 7,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

/// Bad requests become usage errors; everything the numerics raise on
/// valid requests keeps exit code 6.
impl From<ElError> for CliError {
    fn from(e: ElError) -> Self {
        if e.is_input_error() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e)
        }
    }
}
