use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has zero norm")]
    ZeroVector { row: usize },

    #[error("embedding dimensionality must be at least 1")]
    ZeroDim,

    #[error("data length {len} does not equal rows*dim = {rows}*{dim}")]
    ShapeMismatch { rows: usize, dim: usize, len: usize },

    #[error("row {row} of matrix marked normalized has norm {norm}")]
    NotNormalized { row: usize, norm: f64 },

    #[error("bad magic bytes, not a PEMB file")]
    BadMagic,

    #[error("unsupported PEMB version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated header, {0} bytes")]
    TruncatedHeader(usize),

    #[error("truncated payload, expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: u64 },

    #[error("non-finite value at row {row}, col {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("sidecar holds {found} ids for {expected} rows")]
    IdCountMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("k = {k} out of range for gallery of {n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("ranked list has {len} entries, depth {k} requested")]
    ListTooShort { len: usize, k: usize },

    #[error("depth k must be at least 1")]
    InvalidK,

    #[error("index {0} appears twice in a ranked list")]
    DuplicateIndex(usize),

    #[error("lists are not permutations of the same index set")]
    NotSamePermutationDomain,

    #[error("relevance set is empty")]
    EmptyRelevanceSet,

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("zero variance")]
    ZeroVariance,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} items, found {found}")]
    TooFewItems { needed: usize, found: usize },

    #[error("non-finite input at position {0}")]
    NonFiniteInput(usize),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
