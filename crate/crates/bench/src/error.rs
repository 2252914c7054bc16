use thiserror::Error;

use minima_hierarchy::Error as CoreError;

/// Failures of a CLI command, each tied to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config file entries or an invalid hierarchy configuration.
    #[error("{0}")]
    Usage(String),

    /// Unreadable, unwritable or malformed files.
    #[error("{0}")]
    Input(String),

    #[error("{mismatches} of {queries} queries disagree with the full scan")]
    Mismatch { mismatches: usize, queries: usize },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Mismatch { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let msg = err.to_string();
        match root_cause(&err) {
            CoreError::InvalidConfig(_)
            | CoreError::IndexUntracked
            | CoreError::SizeCapExceeded { .. }
            | CoreError::EmptyBatch => CliError::Usage(msg),
            _ => CliError::Input(msg),
        }
    }
}

fn root_cause(err: &CoreError) -> &CoreError {
    match err {
        CoreError::Query { source, .. } => root_cause(source),
        other => other,
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Input(format!("bad JSON: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
