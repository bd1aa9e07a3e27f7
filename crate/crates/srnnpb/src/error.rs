//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("invalid argument: {context}")]
    InvalidArgument { context: String },

    #[error("insufficient data: {context}")]
    InsufficientData { context: String },

    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },

    #[error("training diverged at epoch {epoch}: loss is non-finite")]
    DivergedAtEpoch { epoch: usize },

    #[error("recognition diverged at iteration {iteration}: loss is non-finite")]
    DivergedAtIteration { iteration: usize },

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
        }
    }

    pub fn invalid(context: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context: context.into(),
        }
    }
}

/// Errors raised while loading, validating, or transforming sequence data.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),

    #[error("no .csv files found in {0}")]
    EmptyDataset(PathBuf),

    #[error("file has no data rows: {0}")]
    EmptyFile(PathBuf),

    #[error("sequence too short in {file}: {rows} data row(s), need at least 2")]
    TooShort { file: PathBuf, rows: usize },

    #[error("ragged row in {file} at line {line}: expected {expected} columns, got {got}")]
    RaggedRow {
        file: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-numeric cell in {file} at line {line}, column {column}")]
    NonNumericCell {
        file: PathBuf,
        line: usize,
        column: usize,
    },

    #[error("dimension mismatch in {file}: expected {expected} columns, got {got}")]
    DimensionMismatch {
        file: PathBuf,
        expected: usize,
        got: usize,
    },

    #[error("cannot normalize dimension {dim}: zero range")]
    ZeroRange { dim: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
