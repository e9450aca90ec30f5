use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by ingestion, configuration and the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{row}: column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The node cannot be estimated or tested (empty group, too few
    /// disagreements, zero-probability cell).
    #[error("degenerate node: {0}")]
    Degenerate(String),

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
