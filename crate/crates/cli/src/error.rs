use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}{}: {message}", line.map_or_else(String::new, |l| format!(":{l}")))]
    Config { path: String, line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: String, message: String },
    #[error("{0}")]
    Core(#[from] smallcap::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for unusable input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Csv { .. } => 2,
            _ => 1,
        }
    }
}
