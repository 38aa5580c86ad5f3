use std::path::PathBuf;

/// Errors produced by the inpainting toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("PLY parse error at header line {line}: {message}")]
    PlyHeader { line: usize, message: String },

    #[error("PLY body truncated: expected {expected} vertices, read {read}")]
    PlyTruncated { expected: usize, read: usize },

    #[error("PLY body error: {0}")]
    PlyBody(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no usable source cube: {0}")]
    NoCandidate(String),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
