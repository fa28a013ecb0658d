//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: configuration
//! problems exit 2, data/format problems exit 3, numeric failures exit 4.

use std::path::PathBuf;

/// All errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shape disagreement (dimension counts, matmul inner dims, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// A documented invariant was violated by otherwise well-formed data.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file could not be parsed (bad magic, truncated payload, ...).
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric failure: non-finite loss, divergent training, ...
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Attach a path to an `std::io::Error`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attach a path to a `serde_json::Error`.
    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Attach a path and reason for an unparseable file.
    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// Process exit code for the CLI: 2 config, 3 data/format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_)
            | Error::Contract(_)
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Json { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
