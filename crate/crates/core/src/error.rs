use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point or cube lies outside the bounding box, or the domain is malformed.
    #[error("domain error: {0}")]
    Domain(String),
    /// An operation was called outside the regime it is defined for.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("singular weight: {0}")]
    Singular(String),
    #[error("degenerate domain: {0}")]
    Degenerate(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
