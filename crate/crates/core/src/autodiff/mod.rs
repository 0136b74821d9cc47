//! Tape-style reverse-mode automatic differentiation over rank-2 `f64` tensors.
//!
//! Graphs evaluate eagerly and are append-only. [`Graph::gradient`] records the
//! backward pass as ordinary nodes of the same graph, so a gradient can itself
//! be differentiated. This is what the ensemble-similarity loss needs: it is a
//! function of `∇_a Q` that is then differentiated with respect to the critic
//! parameters.

mod check;
mod grad;
mod graph;
mod tensor;

pub use check::{
    finite_difference_check, finite_difference_compare, finite_difference_compare_with,
    finite_difference_gradient, FdComparison,
};
pub use grad::GradMap;
pub use graph::{Axis, Graph, Node, Op, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<[usize; 2]>,
    },
    #[error("non-finite value produced by {op} (node {node}); path: {}", path.join(" <- "))]
    NonFinite {
        op: &'static str,
        node: usize,
        path: Vec<String>,
    },
    #[error("gradient output must be scalar, got shape {shape:?}")]
    NonScalarOutput { shape: [usize; 2] },
    #[error("tensor data of length {len} does not fit shape {shape:?}")]
    InvalidData { shape: [usize; 2], len: usize },
    #[error("slice [{start}, {start}+{len}) out of range for shape {shape:?}")]
    InvalidSlice {
        shape: [usize; 2],
        start: usize,
        len: usize,
    },
}
