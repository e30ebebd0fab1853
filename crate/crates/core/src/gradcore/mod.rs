//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is recorded per forward pass. Leaves are bound from
//! [`Tensor`]s (parameters or constants); every operation appends a node whose
//! inputs precede it, so reverse recording order is a valid backward order.

mod graph;
mod kernels;
mod tensor;

pub use graph::{Gradients, Graph, Padding, Var};
pub(crate) use graph::log_sum_exp;
pub use kernels::{conv_out_extent, pool_out_extent};
pub use tensor::Tensor;
