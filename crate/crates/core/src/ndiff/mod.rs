//! A small reverse-mode differentiable array engine.
//!
//! Every model computation in this crate is expressed as a [`Graph`] of the
//! primitives below; [`Graph::backward`] returns exact gradients and
//! [`gradcheck`] provides the central-difference oracle used by the tests.

mod array;
pub mod gradcheck;
mod graph;

pub use array::Array;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, OpKind, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NdiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("backward needs a single-element root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}
