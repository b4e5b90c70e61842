use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("invalid data: {0}")]
    Data(String),
    #[error("negative radicand in the Stokes bound at t = {t}")]
    NegativeRadicand { t: f64 },
    #[error(transparent)]
    Numerical(#[from] fbst_core::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::EmptyDataset
            | CliError::Data(_)
            | CliError::NegativeRadicand { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
