use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid map: {0}")]
    InvalidMap(String),
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid slot {0}")]
    InvalidSlot(usize),
    #[error("all slots are masked")]
    AllMasked,
    #[error("logistic fit failed: {0}")]
    Fit(String),
    #[error("malformed event log: {0}")]
    MalformedLog(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in machine-parsable CLI errors and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMap(_) => "invalid_map",
            Error::Config { .. } => "config",
            Error::Shape(_) => "shape",
            Error::InvalidSlot(_) => "invalid_slot",
            Error::AllMasked => "all_masked",
            Error::Fit(_) => "fit",
            Error::MalformedLog(_) => "malformed_log",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingFile(_) => "missing_file",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
