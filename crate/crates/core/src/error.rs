use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {coord} lies outside spatial size {size:?}")]
    OutOfRange { coord: String, size: Vec<usize> },
    #[error("site {0} appears more than once")]
    DuplicateSite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dense tensor would hold {scalars} scalars (limit {limit})")]
    TooLarge { scalars: usize, limit: usize },
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("submanifold convolution needs an odd filter size, got {0}")]
    EvenFilter(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no stored pattern for level {0}")]
    MissingPattern(usize),
    #[error("encoder pattern at level {level} is not a subset of the decoder active set ({missing} sites missing)")]
    PatternNotSubset { level: usize, missing: usize },
    #[error("output active set differs from input active set")]
    PatternMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid network spec: {0}")]
    SpecInvalid(String),
    #[error("checkpoint does not match: {0}")]
    SpecMismatch(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint {path}: {source}")]
    CheckpointIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit status for a failed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Checkpoint = 4,
    Other = 1,
}

impl Error {
    pub fn exit_kind(&self) -> ExitKind {
        match self {
            Error::Config(_) | Error::UnknownName { .. } | Error::SpecInvalid(_) => ExitKind::Config,
            Error::Parse { .. }
            | Error::DegenerateSample(_)
            | Error::EmptyCloud
            | Error::Io { .. }
            | Error::OutOfRange { .. }
            | Error::DuplicateSite(_)
            | Error::DimensionMismatch(_)
            | Error::BadGeometry(_)
            | Error::EmptyInput => ExitKind::Data,
            Error::BadMagic
            | Error::VersionUnsupported(_)
            | Error::Truncated(_)
            | Error::SpecMismatch(_)
            | Error::CheckpointIo { .. } => ExitKind::Checkpoint,
            _ => ExitKind::Other,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
