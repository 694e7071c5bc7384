//! Numerical core for classifying three-channel brain volumes.
//!
//! Everything in this crate is pure computation over in-memory data and builds
//! with `no_std` + `alloc`: the dense [`Tensor`] and its 3D convolution and
//! max-pooling kernels, the layer graph with inception and inception-residual
//! blocks, the named architectures, mini-batch training, the PCA + SVM
//! baseline, and the nested cross-validation / ensemble protocol. File formats,
//! manifests and the command line live in the `brainvox` crate.
#![no_std]

extern crate alloc;

pub mod arch;
pub mod baseline;
pub mod conv;
pub mod error;
pub mod eval;
pub mod nn;
pub mod phantom;
pub mod pool;
pub mod resample;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
