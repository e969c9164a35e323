//! Minimal reverse-mode differentiation: dense tensors, the handful of
//! operations the ranking model needs, a stop-gradient marker, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod graph;
mod gradcheck;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, HasGraph};
pub use graph::{sigmoid, softplus, Activation, Graph, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {expected:?} and {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}
