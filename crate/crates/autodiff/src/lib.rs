//! Dense double-precision tensors with tape-based reverse-mode
//! differentiation, including recorded (differentiable) input gradients for
//! gradient-penalty objectives, an Adam optimizer, and the `MCSR1` tensor
//! file format.

mod adam;
pub mod check;
mod error;
mod graph;
pub mod io;
mod kernels;
pub mod ops;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{AutodiffError, Result};
pub use graph::{Gradients, Graph, NodeId, Var};
pub use params::ParamSet;
pub use tensor::Tensor;
