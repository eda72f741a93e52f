//! Dense tensors, a reverse-mode tape and the Adam optimizer.
//!
//! The primitive set is deliberately small: matmul, elementwise
//! add/multiply/scale, tanh, sigmoid, softmax, mean over the first axis,
//! concatenation (and its inverse, slicing), dot products, dropout, and
//! the two classification losses.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{dropout, Tensor};

pub(crate) use tape::{bce_term, log_sum_exp};
pub(crate) use tensor::{dot, sigmoid};
