//! Minimal dense-tensor substrate with reverse-mode automatic differentiation.
//!
//! f32 everywhere, one implicit tape per forward pass, deterministic
//! counter-based RNG streams, and GFT1 serialization for checkpoints and
//! golden files.

pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod macs;
mod ops;
#[cfg(test)]
mod ops_test;
pub mod rng;
pub mod serial;
pub mod shape;
mod tensor;

pub use error::{Result, TensorError};
pub use rng::RngStream;
pub use tensor::Tensor;
