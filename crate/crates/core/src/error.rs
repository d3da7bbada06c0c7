use thiserror::Error;

/// Errors surfaced by instance construction, the oracle, policies and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance too large for exhaustive search: {assignments} assignments exceed {limit}")]
    TooLarge { assignments: u128, limit: u128 },

    #[error("generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    #[error("{path}:{line}: column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
