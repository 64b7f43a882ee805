//! Higher-order Tucker compression of convolution kernels.
//!
//! The input-channel axis of a `D×D×K1×K2` kernel is split into `l` sub-modes,
//! Tucker ranks are picked by a search centred on variational Bayesian
//! estimates, and the kernel is factored by truncated HOSVD into a chain of
//! small convolutions (`l` pointwise sub-mode stages, one spatial core, one
//! pointwise output stage). [`convsim`] provides the reference convolution used
//! to check that the chain reproduces the original layer.
//!
//! Modes are zero-based throughout the Rust API.

pub mod commands;
pub mod convsim;
mod error;
pub mod fixtures;
pub mod hotcake;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod tensor;
pub mod tucker;
pub mod vbmf;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, Matrix};
