use std::io;

use thiserror::Error;

/// Errors raised by the decomposition kernels, the federation protocol and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("tensor has zero Frobenius norm")]
    ZeroNorm,

    #[error("component {component} is degenerate in mode {mode}")]
    DegenerateComponent { mode: usize, component: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("peer disconnected: {0}")]
    Disconnected(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
