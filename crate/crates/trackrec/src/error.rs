use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// Config document failed schema validation.
    #[error("{0}")]
    Config(String),
    /// A data file row could not be parsed.
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    /// A data file row names an unknown user or item.
    #[error("{}:{line}: {msg}", path.display())]
    Referential { path: PathBuf, line: u64, msg: String },
    #[error("checkpoint {} not found", .0.display())]
    MissingCheckpoint(PathBuf),
    /// A checkpoint exists but is not in the expected format.
    #[error("{}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{0}")]
    Core(#[from] trackrec_core::Error),
}

impl CliError {
    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Parse { .. } => "parse",
            CliError::Referential { .. } => "referential",
            CliError::MissingCheckpoint(_) => "missing-checkpoint",
            CliError::Checkpoint { .. } => "checkpoint-format",
            CliError::Core(e) => e.category(),
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}
