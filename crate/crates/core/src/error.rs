use std::io;

use thiserror::Error;

/// Errors raised anywhere in the flood pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("window ({row0}, {col0}) of size {size} exceeds {rows}x{cols} raster")]
    Bounds {
        row0: usize,
        col0: usize,
        size: usize,
        rows: usize,
        cols: usize,
    },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("empty mask: no data cells")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
