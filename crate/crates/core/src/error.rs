use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index {index} out of range (limit {limit}) in {context}")]
    Index {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    /// A precondition of an operation was violated.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: feature index {index} is outside dimension {dim}")]
    Range {
        path: PathBuf,
        line: usize,
        index: usize,
        dim: usize,
    },

    #[error("not enough examples of class {class}: need {needed}, have {available} (short by {})", needed - available)]
    Capacity {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
