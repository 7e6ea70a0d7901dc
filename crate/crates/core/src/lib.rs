//! Building blocks for a small recurrent video super-resolution study:
//! a reverse-mode autodiff tape, attention blocks, degradation synthesis,
//! the recurrent pipeline and feature diagnostics.

pub mod attention;
pub mod autodiff;
pub mod degradation;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod vsr;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
