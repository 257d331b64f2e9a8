//! Dense row-major tensors with a tape-based reverse-mode autodiff graph and
//! an Adam optimizer.
//!
//! The element type is generic over [`Element`] so the same model code runs in
//! `f32` for training and inference and in `f64` for finite-difference
//! gradient checks.

pub mod adam;
pub mod element;
pub mod error;
pub mod graph;
pub mod rng;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use rng::RngStreams;
pub use tensor::Tensor;
