use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SsmError>;

#[derive(Debug, Error)]
pub enum SsmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("no class datasets given")]
    NoClasses,

    #[error("invalid block layout: {0}")]
    InvalidLayout(String),

    #[error("zero column {column} (class {class}, local index {local}) cannot be normalized")]
    ZeroColumn {
        class: usize,
        local: usize,
        column: usize,
    },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("dictionary columns must be normalized first")]
    NotNormalized,

    #[error("enumeration of {count} supports exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("trial {trial} at d_hat={d_hat} failed: {source}")]
    Trial {
        d_hat: usize,
        trial: usize,
        #[source]
        source: Box<SsmError>,
    },
}

impl SsmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsmError::Io {
            path: path.into(),
            source,
        }
    }
}
