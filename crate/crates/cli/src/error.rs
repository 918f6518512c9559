use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Model(#[from] bmpaw_core::Error),
}

impl CliError {
    /// Process exit status for the error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Read { .. } => 2,
            CliError::Write { .. } | CliError::ThreadPool(_) | CliError::Model(_) => 3,
        }
    }
}
