use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input could not be decoded into the expected layout.
    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    /// Input decoded but violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("binding error: {0}")]
    Binding(String),

    /// A non-finite value showed up where a finite one is required.
    #[error("numeric error in {tensor}: {message}")]
    Numeric { tensor: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("database error on {path}: {message}")]
    Database { path: PathBuf, message: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("request error: {0}")]
    Request(String),

    #[error("content error: {0}")]
    Content(String),

    /// Any of the above, raised while processing one dialogue turn.
    #[error("{db_id}/{interaction} turn {turn}: {source}")]
    Turn {
        db_id: String,
        interaction: String,
        turn: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through [`Error::Turn`].
    pub fn root(&self) -> &Error {
        match self {
            Error::Turn { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
