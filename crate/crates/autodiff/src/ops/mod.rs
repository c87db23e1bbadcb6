//! Differentiable operations. Each function records one node on the graph
//! of its inputs.

mod conv;
mod elementwise;
mod linalg;
mod pool;
mod shape;

pub use conv::{conv2d, conv_transpose2d};
pub use elementwise::{add, add_scalar, expand, mean, mul, relu, scale, sqrt, square, sub, sum, sum_per_sample};
pub use linalg::{dense, gram_matrix, matmul};
pub use pool::maxpool2;
pub use shape::{concat_channels, flatten, reshape};
