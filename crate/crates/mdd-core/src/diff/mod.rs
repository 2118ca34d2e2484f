//! Minimal reverse-mode differentiation layer: exactly the primitives the
//! recognizer, CTC, and the training losses need, each with a gradient
//! verifiable by finite differences.

pub mod gradcheck;
pub mod num;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, FD_STEP};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
