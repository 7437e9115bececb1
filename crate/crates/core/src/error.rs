use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("counter backend unavailable ({capability}): {reason}")]
    BackendUnavailable { capability: String, reason: String },

    #[error("measurement of {event} failed: {reason}")]
    MeasurementFailed { event: String, reason: String },

    #[error("event {0} is not in the backend catalog")]
    UnknownEvent(String),

    #[error("event {0} requires privileged access but the backend is in user mode")]
    PrivilegedEvent(String),

    #[error("symbol not found: {0}")]
    SymbolNotFound(String),

    #[error("invocation of {target} failed: {reason}")]
    InvocationFailed { target: String, reason: String },

    #[error("acquisition aborted after {completed} of {total} instances: {source}")]
    AcquisitionAborted {
        completed: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("malformed file {path}: line {line}, column {column}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the host environment (counters,
    /// permissions, missing libraries) rather than by the data.
    pub fn is_environmental(&self) -> bool {
        match self {
            Error::BackendUnavailable { .. }
            | Error::MeasurementFailed { .. }
            | Error::PrivilegedEvent(_)
            | Error::SymbolNotFound(_)
            | Error::InvocationFailed { .. }
            | Error::Io { .. } => true,
            Error::AcquisitionAborted { source, .. } => source.is_environmental(),
            _ => false,
        }
    }
}
