use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("singular saddle-point system at step {step}: {detail}")]
    SingularSystem { step: usize, detail: String },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("index set exceeds cardinality cap {cap}")]
    IndexSetOverflow { cap: usize },

    #[error("missing sample for sparse grid node {0}")]
    MissingSample(usize),

    #[error("high-fidelity solve failed at sparse grid node {node}: {source}")]
    NodeSolve {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("missing input artifact: expected {0}")]
    MissingArtifact(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub fn stage(stage: &str, source: Error) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(source) }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Io { .. } | Error::Format { .. } | Error::MissingArtifact(_) => ErrorKind::Io,
            Error::Stage { source, .. } | Error::NodeSolve { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}
