//! Dense `f64` arrays and tape-based reverse-mode differentiation.

mod array;
mod gradcheck;
mod tape;

pub use array::{DenseArray, Shape};
pub use gradcheck::{grad_check, relative_error};
pub use tape::{sigmoid, softmax, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("backward needs a scalar output, got {0} values")]
    NotScalar(usize),
}
