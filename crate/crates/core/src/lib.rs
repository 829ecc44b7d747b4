//! Dynamic-grained latent diffusion at desk scale.
//!
//! Entropy-driven dynamic grained coding, a dual-resolution VAE, a grain-map
//! prior transformer, a multi-grained diffusion transformer with windowed
//! refinement, DDPM machinery, and an analytic parameter/FLOP accountant.

pub mod error;
pub mod graincode;
pub mod nn;
pub mod oracles;

pub use d2it_tensor as tensor;
pub use error::{CoreError, Result};
pub use tensor::{RngStream, Tensor};
