//! Crate-wide error type and CLI exit-code classification.

use std::path::PathBuf;

use thiserror::Error;

use crate::facegen::Region;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid discrete option {index} for region {region}: schema allows {count} options")]
    InvalidOption {
        region: Region,
        index: usize,
        count: usize,
    },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("target layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("view parameters out of bounds: {0}")]
    InvalidView(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid net spec: {0}")]
    InvalidNetSpec(String),
    #[error("input size mismatch: model expects {expected}x{expected}, image is {width}x{height}")]
    InputSizeMismatch {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("schema fingerprint mismatch: found {found}, current schema is {expected}")]
    FingerprintMismatch { found: String, expected: String },
    #[error("dataset at {0} is incomplete: partial-output marker present")]
    IncompleteDataset(PathBuf),
    #[error("sample {id}: missing file {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("prediction table has {rows} rows; at least {min} required")]
    TableTooSmall { rows: usize, min: usize },
    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("report: {0}")]
    Report(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit-code class for the CLI: 2 = validation failure, 3 = runtime failure.
    /// Usage errors (exit 1) are handled by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidOption { .. }
            | Error::InvalidRecipe(_)
            | Error::InvalidSchema(_)
            | Error::LayoutMismatch(_)
            | Error::InvalidView(_)
            | Error::InvalidConfig(_)
            | Error::InvalidNetSpec(_)
            | Error::InputSizeMismatch { .. }
            | Error::FingerprintMismatch { .. }
            | Error::IncompleteDataset(_)
            | Error::MissingFile { .. }
            | Error::EmptySplit(_)
            | Error::TableTooSmall { .. }
            | Error::DegenerateCorpus(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
