use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("malformed log {path} line {line}: {reason}")]
    MalformedLog { path: PathBuf, line: usize, reason: String },
    #[error("empty dataset: {path} is missing or has no records ({hint})")]
    EmptyDataset { path: PathBuf, hint: &'static str },
    #[error("sweep point {point} failed: {source}")]
    SweepPoint {
        point: String,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] mixsr::Error),
}

impl CliError {
    /// Process exit code: 1 for usage/config problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::SweepPoint { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    pub(crate) fn config(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
