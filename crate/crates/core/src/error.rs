use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unit error: {0}")]
    Unit(String),

    #[error("parse error in {file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Config(_)
                | Error::Domain(_)
                | Error::Unit(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Protocol(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
