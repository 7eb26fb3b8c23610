//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or missing data (manifests, images, checkpoints).
    #[error("data error: {0}")]
    Data(String),

    /// Parse failure inside a line-delimited file.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Incompatible tensor/plane shapes.
    #[error("shape error: {0}")]
    Shape(String),

    /// Iterative dynamics failed to select a target.
    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: config=2, data=3, convergence=4, other=1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Shape(_) => 3,
            Error::Convergence(_) => 4,
            _ => 1,
        }
    }
}
