use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how a batch run should report them: input/file
/// problems ([`Error::Io`], [`Error::HeaderMismatch`], [`Error::Cell`],
/// [`Error::Invariant`]), bad parameters ([`Error::Param`]), and failures of
/// the computation itself ([`Error::Degenerate`], [`Error::Dimension`],
/// [`Error::NonFinite`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },

    /// A cell failed to parse or violated its column kind. `row` is the
    /// 1-based data row (excluding the header).
    #[error("{path}: row {row}, column {column:?}: {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    /// A dataset-level invariant does not hold (duplicate keys, partition
    /// gaps, events before signup, ...).
    #[error("invalid input: {0}")]
    Invariant(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The requested quantity is undefined on this data (zero variance,
    /// perfect separation, empty strata, ...).
    #[error("{0}")]
    Degenerate(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
