use thiserror::Error;

/// Errors raised by tensor construction, ops, and the backward pass.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("matmul inner dimension mismatch: {lhs:?} x {rhs:?}")]
    InnerDim { lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: expected {expected} elements, got {got}")]
    ElementCount {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("{op}: non-finite input value at index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("gft1: {0}")]
    Serial(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
