//! Sketch-conditioned image completion core.
//!
//! Everything in this crate is a pure function of its inputs (plus explicit
//! seeds): raster filters, the sketch and color domains used to forge training
//! conditioning, random training masks, sample assembly, a small reverse-mode
//! autodiff engine with double backpropagation, the completion network and its
//! global/local critic, the loss functions and a single training step.
//!
//! File formats, the training driver, the CLI and the HTTP service live in the
//! `sketchedit` crate. This crate is `no_std` and only needs `alloc`; enable the
//! `std` feature for runtime SIMD dispatch in the matrix kernels.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod autodiff;
pub mod color;
pub mod dataset;
pub mod editor;
mod error;
pub mod geom;
pub mod mask;
pub mod model;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod sketch;
pub mod training;

pub use error::{Error, Result};
pub use raster::{BinaryMask, RasterImage};
