//! Pipelined, in-place 3x3 morphology on grayscale images.
//!
//! The guide in `book/` walks through the concepts; its code blocks are
//! compiled as doctests.

pub mod cli;
pub mod error;
pub mod image;
pub mod io;
pub mod kernel;
pub mod operators;
pub mod oracle;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use image::{DynImage, ElemType, Image, Pixel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/images.md")]
    pub mod images {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    pub mod kernels {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub mod pipeline {}
    #[doc = include_str!("../../../book/src/operators.md")]
    pub mod operators {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
