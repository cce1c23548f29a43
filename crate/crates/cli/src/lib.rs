//! Library side of the command-line tools: configuration, file formats and
//! the subcommand implementations, separated from `main` for testability.

pub mod commands;
pub mod config;
pub mod formats;

use thiserror::Error;

/// Errors mapped onto process exit codes: usage 1, data 2, internal 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<settrack::tracker::TrackerError> for CliError {
    fn from(e: settrack::tracker::TrackerError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<settrack::observation::ObsError> for CliError {
    fn from(e: settrack::observation::ObsError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<settrack::metrics::MetricsError> for CliError {
    fn from(e: settrack::metrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}
