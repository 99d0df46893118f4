//! Reverse-mode automatic differentiation over f64 tensors.
//!
//! Every differentiable computation in the crate is built from the ops in
//! this module. Graph nodes are recorded only when some input requires
//! gradient and recording is enabled (see [`no_grad`]).

mod check;
mod ops;
mod tensor;

pub use check::grad_check;
pub use tensor::{is_grad_enabled, no_grad, Tensor};


#[cfg(test)]
mod tests;
