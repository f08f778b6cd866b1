//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Forward operations are evaluated eagerly and recorded on a [`Tape`]. A
//! backward pass either produces plain gradient tensors ([`Tape::backward`])
//! or records the gradient computation itself on the same tape
//! ([`Tape::grad_graph`]), which is what lets the meta-trainer differentiate
//! through an inner gradient step.

mod array;
mod check;
mod params;
mod scalar;
mod tape;

pub use array::Tensor;
pub use check::{finite_diff_coords, finite_diff_gradient, relative_error};
pub use params::{sgd_step, GradientMap, ParamStore, TensorMap};
pub use scalar::{Precision, Scalar};
pub use tape::{ParamVars, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    ValueCount { shape: Vec<usize>, len: usize },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("label {label} at point {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("expected a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` has shape {expected:?}, got {actual:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}
