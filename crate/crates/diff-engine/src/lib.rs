//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Design: a [`Tensor`] is an immutable value with a unique id; a [`Tape`]
//! records every differentiable op applied through it. [`Tape::backward`]
//! replays the records in reverse from a scalar loss and returns a map from
//! tensor id to gradient. Gradient accumulation follows the fixed reverse
//! record order, so runs are bit-reproducible. Complex arithmetic lives in
//! [`CTensor`], which lowers everything to real ops before anything is taped.

mod check;
mod complex;
mod composites;
mod error;
mod kernels;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_fourth, GradCheckReport};
pub use complex::CTensor;
pub use composites::{instance_norm, linear};
pub use error::{DiffError, Result};
pub use tape::{CustomOp, Gradients, Tape};
pub use tensor::{Tensor, TensorData};
