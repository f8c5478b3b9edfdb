//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Every [`Tensor`] operation on inputs that require gradients records a
//! backward rule. [`Tensor::backward`] orders the recorded graph by execution
//! order (the [`Tape`]) and replays it in reverse, accumulating gradients
//! into trainable leaves. [`gradcheck`] verifies those rules against central
//! finite differences in `f64`.
//!
//! Numerics are single-threaded and use a fixed reduction order, so identical
//! inputs give bit-identical forward and backward results.

mod error;
pub mod gradcheck;
pub mod init;
mod ops;
mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_check, finite_diff_check_inputs, FdOptions, FdReport};
pub use ops::elementwise::{Binary, Unary};
pub use ops::norm::BatchNormState;
pub use ops::resample::{Border, WarpMap};
pub use ops::shape::{strides, NO_SOURCE};
pub use ops::softmax::KeyMask;
pub use real::Real;
pub use tensor::{grad_enabled, no_grad, Tape, Tensor};
