use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension mismatches, invalid counts, missing fields.
    #[error("configuration error: {0}")]
    Config(String),

    /// Several configuration fields failed validation at once.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidFields(Vec<String>),

    /// A checkpoint or data file could not be decoded.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A file decoded fine but does not fit where it is being loaded.
    #[error("validation error: {0}")]
    Validation(String),

    /// A non-finite value or a failed factorization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A non-finite adjoint or value met during a reverse sweep.
    #[error("non-finite value during reverse sweep at tape operation {op_index}")]
    NonFiniteAdjoint { op_index: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
