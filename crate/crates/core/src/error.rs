use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix columns are not orthonormal (max |XᵀX - I| = {max_deviation:e})")]
    NotOrthonormal { max_deviation: f64 },

    #[error("rank-deficient matrix: numerical rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("rejection sampler exhausted after {attempts} attempts")]
    RejectionExhausted { attempts: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("site index {index} out of range for {n} sites")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("labels required but absent")]
    MissingLabels,

    #[error("class {class} has {available} instances, {requested} requested")]
    InsufficientInstances {
        class: u8,
        available: usize,
        requested: usize,
    },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotOrthonormal { .. }
                | Error::RankDeficient { .. }
                | Error::RejectionExhausted { .. }
        )
    }
}

/// Malformed IDX containers. Offsets are byte positions in the file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdxError {
    #[error("wrong magic at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("truncated file at offset {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("dimension overflow in header field at offset {offset}")]
    DimensionOverflow { offset: usize },

    #[error("{extra} trailing bytes after payload ending at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("zero-sized dimension in header field at offset {offset}")]
    ZeroDimension { offset: usize },
}
