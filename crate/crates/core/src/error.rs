use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"GFD1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported dump version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated dump, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {extra} trailing bytes after payload")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("label {label} at sample {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        num_classes: u32,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lambda {lambda} < 1 requires predicted labels, but {what} has none")]
    MissingPredictions { what: String, lambda: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("probe training diverged at probe-epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("grouping: class {0} is not assigned to any group")]
    MissingClass(String),

    #[error("grouping: class {0} is assigned more than once")]
    DuplicateClass(String),

    #[error("grouping: unknown class {0:?}")]
    UnknownClass(String),

    #[error("group sizes sum to {sum}, but there are {num_classes} classes")]
    GroupSizeMismatch { sum: usize, num_classes: usize },

    #[error("graph has no confusions (all-zero adjacency); assortativity is undefined")]
    NoConfusions,

    #[error("association matrix has all mass in a single cell; assortativity is undefined")]
    DegenerateGrouping,

    #[error("graph has zero total edge weight")]
    NoEdges,

    #[error("confusion matrix has no counted samples")]
    EmptyConfusion,

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("unknown export format {0:?}")]
    UnknownFormat(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Short stable identifier used in machine-readable CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::Truncated { .. } => "truncated",
            Error::TrailingBytes { .. } => "trailing_bytes",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingPredictions { .. } => "missing_predictions",
            Error::EmptyBatch => "empty_batch",
            Error::Diverged { .. } => "diverged",
            Error::MissingClass(_) => "missing_class",
            Error::DuplicateClass(_) => "duplicate_class",
            Error::UnknownClass(_) => "unknown_class",
            Error::GroupSizeMismatch { .. } => "group_size_mismatch",
            Error::NoConfusions => "no_confusions",
            Error::DegenerateGrouping => "degenerate_grouping",
            Error::NoEdges => "no_edges",
            Error::EmptyConfusion => "empty_confusion",
            Error::UnknownNode(_) => "unknown_node",
            Error::UnknownFormat(_) => "unknown_format",
            Error::Parse { .. } => "parse",
            Error::Manifest(_) => "manifest",
        }
    }
}
