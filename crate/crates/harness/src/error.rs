use std::io;
use std::path::{Path, PathBuf};

use symmrl_core::PpoError;
use thiserror::Error;

/// Process exit status for each error class.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: schema mismatch: {reason}")]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error("{path}: malformed {what}: {message}")]
    Malformed {
        path: PathBuf,
        what: &'static str,
        message: String,
    },
    #[error("no input: {0}")]
    EmptyInput(String),
    #[error("{failed} check(s) failed")]
    CheckFailed { failed: usize },
    #[error("{context}: {source}")]
    Training {
        context: String,
        #[source]
        source: PpoError,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. }
            | HarnessError::ConfigParse { .. }
            | HarnessError::SchemaMismatch { .. }
            | HarnessError::Malformed { .. }
            | HarnessError::EmptyInput(_) => EXIT_VALIDATION,
            // A missing input file is a usage error; anything else is I/O at runtime.
            HarnessError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => EXIT_VALIDATION,
            HarnessError::Io { .. } | HarnessError::Training { .. } => EXIT_RUNTIME,
            HarnessError::CheckFailed { .. } => EXIT_CHECK_FAILED,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
