use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("missing feature column `{0}`")]
    MissingFeature(String),

    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {class} has {count} rows, need at least {needed}")]
    ClassTooSmall { class: usize, count: usize, needed: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("no medoid for class {0}")]
    MissingMedoid(usize),

    #[error("feature {0} is not an anchor of this model")]
    UnknownAnchor(usize),

    #[error("feature index {0} out of range")]
    UnknownFeature(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("qubit index {qubit} invalid for {n_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("repeated qubit index {0}")]
    RepeatedQubit(usize),

    #[error("zero-norm input cannot be amplitude-encoded")]
    ZeroNorm,

    #[error("unsupported artifact format version {found} (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },

    #[error("artifact error: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used by the command-line driver to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ArtifactVersion { .. } | Error::Artifact(_) | Error::Json(_) => ErrorKind::Artifact,
            Error::InvalidArgument(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Artifact,
}
