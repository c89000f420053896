use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::Tag;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: malformed file: {msg}")]
    MalformedFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("mesh has no boundary loop tagged {0}")]
    MissingTag(Tag),

    #[error("expected a boundary vector on {expected}, got {found}")]
    TagMismatch { expected: Tag, found: Tag },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate triangle {index} with area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("regularization weight must be positive, got {0}")]
    NonPositiveRho(f64),

    #[error("noise draw degenerated to a zero vector twice")]
    DegenerateNoise,

    #[error("discrepancy bracket failed: {0}")]
    BracketFailure(String),

    #[error("parameter outside its domain: {0}")]
    ParameterDomain(String),

    #[error("value {value:e} outside the range [{lo:e}, {hi:e}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("empty grid")]
    EmptyGrid,

    #[error("constant fit failed: {0}")]
    FitFailure(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sample {0} is outside the admissible set")]
    InadmissibleSample(usize),

    #[error("config error at `{key}`: {msg}")]
    Schema { key: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by input files, configuration or the filesystem,
    /// as opposed to numerical or domain failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::MalformedFile { .. } | Error::Schema { .. }
        )
    }
}
