use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {line}:{column} near `{token}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error("domain error in `{subtree}`: {message}")]
    Domain { subtree: String, message: String },

    #[error("numerical error after {iterations} iterations: {message}")]
    Numerical { message: String, iterations: usize },

    #[error("degenerate metric: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Capability(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type Result<T> = std::result::Result<T, Error>;
