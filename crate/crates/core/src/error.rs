use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (malformed path, bad node id, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An enumeration or LP would exceed its explicit size cap.
    #[error("size cap exceeded: {what} is {actual}, limit {limit}")]
    SizeCap {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    /// A parameter is outside the domain of a formula or generator.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid path trace: {0}")]
    InvalidTrace(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("topology: {0}")]
    Topology(String),

    #[error("linear program: {0}")]
    Lp(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
