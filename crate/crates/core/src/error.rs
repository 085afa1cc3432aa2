use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("row {row}: column {column:?} value {value:?} is not a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("width mismatch: expected {expected}, got {actual}")]
    Width { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    DegenerateTarget(String),

    #[error("prediction oracle has no entry for row {0}")]
    UnknownRow(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    DataValidation,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Input => 2,
            ErrorClass::DataValidation => 3,
            ErrorClass::Internal => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Input => "input",
            ErrorClass::DataValidation => "data-validation",
            ErrorClass::Internal => "internal",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::Report(_) => ErrorClass::Input,
            Error::Schema(_)
            | Error::Value { .. }
            | Error::Parse { .. }
            | Error::Width { .. }
            | Error::Empty(_)
            | Error::DegenerateTarget(_)
            | Error::UnknownRow(_) => ErrorClass::DataValidation,
            Error::Invariant(_) => ErrorClass::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
