use std::io;

use thiserror::Error;

use crate::image::ElemType;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },

    #[error("value {value} is not representable as {elem}")]
    ValueOutOfRange { value: f64, elem: ElemType },

    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("element type mismatch: {0} vs {1}")]
    ElemMismatch(ElemType, ElemType),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported magic {0:?}")]
    BadMagic(Vec<u8>),

    #[error("unknown element code {0}")]
    UnknownElemCode(u8),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("thread pinning: {0}")]
    Pinning(String),

    #[error("filter stage {stage} failed: {message}")]
    StageFailed { stage: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
