use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the re-ranking library.
///
/// Variants are grouped so callers can map them onto coarse outcome classes
/// (data problems vs. solver problems) via [`Error::is_solver_error`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("dataset exhausted by filtering")]
    DatasetExhausted,

    #[error("user {user}: {message}")]
    User { user: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("user {user}: insufficient candidates ({available} available, {required} required)")]
    InsufficientCandidates {
        user: String,
        available: usize,
        required: usize,
    },

    #[error("user {user}: item {item} is not in the item vocabulary")]
    UnknownItem { user: String, item: String },

    #[error("user {user}: selection violates slot constraints: {message}")]
    InvalidSelection { user: String, message: String },

    #[error("user {user}: {message}")]
    Solver { user: String, message: String },

    #[error("user {user}: brute force needs {count} evaluations, above the limit of {limit}; use branch_and_bound")]
    BruteForceGuard { user: String, count: u128, limit: u128 },

    #[error("{0}")]
    Empty(&'static str),

    #[error("objective kind mismatch: tuned for {tuned}, requested {requested}")]
    ObjectiveKindMismatch { tuned: String, requested: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn user(user: impl Into<String>, message: impl Into<String>) -> Self {
        Error::User {
            user: user.into(),
            message: message.into(),
        }
    }

    /// True for failures raised while solving a selection problem.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSelection { .. } | Error::Solver { .. } | Error::BruteForceGuard { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
