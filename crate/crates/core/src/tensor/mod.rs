//! Minimal differentiable kernel for the plan scorer.
//!
//! Everything operates on row-major `f64` matrices where each row is one tree
//! node (convolution, pooling) or one plan (linear layers). Many trees are
//! processed together as a [`TreeBatch`]: their nodes are concatenated and
//! child links are indices into the concatenation.

mod activation;
mod adam;
mod conv;
mod gradcheck;
mod linear;
mod matrix;
mod pool;

pub use activation::{leaky_relu, leaky_relu_backward, DEFAULT_LEAKY_SLOPE};
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use conv::{TreeConvGrads, TreeConvLayer};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, relative_error};
pub use linear::{LinearGrads, LinearLayer};
pub use matrix::DenseMatrix;
pub use pool::{dynamic_max_pool, dynamic_max_pool_backward, PoolResult};

use crate::plan_ir::{EncodedTree, FEATURE_DIM};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch { op: &'static str, expected: String, got: String },
    #[error("tree has no non-Null nodes")]
    EmptyTree,
    #[error("parameter/gradient shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient entry in tensor {tensor} at {index}")]
    NonFiniteGradient { tensor: usize, index: usize },
}

pub(crate) fn dim_mismatch(
    op: &'static str,
    expected: impl std::fmt::Display,
    got: impl std::fmt::Display,
) -> TensorError {
    TensorError::DimensionMismatch { op, expected: expected.to_string(), got: got.to_string() }
}

/// Topology of one or more binary trees whose non-Null nodes are stacked into
/// the rows of a feature matrix. Absent children read as zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBatch {
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
    /// Row range of each tree, in preorder.
    pub segments: Vec<Range<usize>>,
}

impl TreeBatch {
    pub fn node_count(&self) -> usize {
        self.left.len()
    }

    pub fn tree_count(&self) -> usize {
        self.segments.len()
    }

    /// Drops `Null` padding and stacks the trees' node features.
    pub fn from_encoded<'a, I>(trees: I) -> (TreeBatch, DenseMatrix)
    where
        I: IntoIterator<Item = &'a EncodedTree>,
    {
        let mut batch = TreeBatch { left: Vec::new(), right: Vec::new(), segments: Vec::new() };
        let mut data = Vec::new();
        for t in trees {
            let start = batch.left.len();
            // Map encoded indices to stacked rows, skipping Null nodes.
            let mut row_of = vec![None; t.nodes.len()];
            let mut next = start;
            for (i, n) in t.nodes.iter().enumerate() {
                if !n.is_null {
                    row_of[i] = Some(next);
                    next += 1;
                }
            }
            for n in t.nodes.iter().filter(|n| !n.is_null) {
                batch.left.push(n.left.and_then(|c| row_of[c]));
                batch.right.push(n.right.and_then(|c| row_of[c]));
                data.extend_from_slice(&n.features);
            }
            batch.segments.push(start..next);
        }
        let rows = batch.left.len();
        (batch, DenseMatrix::from_vec(rows, FEATURE_DIM, data))
    }
}
