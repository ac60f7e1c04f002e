//! Dense matrix algebra and a small reverse-mode differentiation layer.
//!
//! The primitive set is deliberately minimal: exactly what the two victim
//! models and the feature inverter need. Gradients for every primitive are
//! verified against central finite differences (see [`finite_difference_check`]).

mod adam;
mod matrix;
mod tape;

pub use adam::OptimizerState;
pub use matrix::{cosine_similarity, leaky_relu, row_softmax, DenseMatrix};
pub use tape::{finite_difference_check, Gradients, Graph, NodeId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch in {context}: ({}x{}) vs ({}x{})", lhs.0, lhs.1, rhs.0, rhs.1)]
    ShapeMismatch {
        context: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value in {context}")]
    NonFiniteValue { context: &'static str },
    #[error("cosine similarity undefined for zero-norm vector")]
    ZeroNormVector,
    #[error("loss node must be scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("row {row} is masked but has no label")]
    MissingLabel { row: usize },
    #[error("label {label} out of range for {classes} classes at row {row}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
}
