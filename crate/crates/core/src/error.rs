//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv row {row} has {got} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },

    #[error("csv row {row} col {col}: cannot parse {token:?} as a finite number")]
    NonNumericCell { row: usize, col: usize, token: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("split too small: {0}")]
    SplitTooSmall(String),

    #[error("sample sizes must be equal for this estimator (n={n}, m={m})")]
    UnequalSampleSizes { n: usize, m: usize },

    #[error("degenerate length scales: {0}")]
    DegenerateLengthScales(String),

    #[error("non-finite loss at epoch {epoch} (learning rate {lr:e})")]
    NonFiniteLoss { epoch: usize, lr: f64 },
}

impl Error {
    /// True for errors caused by malformed user input (files, shapes,
    /// configuration) as opposed to numerical failures during a run.
    /// The CLI maps the former to exit code 1 and the latter to 2.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::RaggedRow { .. }
                | Error::NonNumericCell { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidData(_)
                | Error::InvalidConfig(_)
                | Error::SplitTooSmall(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
