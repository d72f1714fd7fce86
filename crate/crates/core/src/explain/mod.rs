//! Global permutation importance and per-node mask explanations.

mod importance;
mod masks;

use thiserror::Error;

pub use importance::{permutation_importance, FeatureImportance};
pub use masks::{explain_node, explain_node_static, temporal_wrapper, ExplainConfig, ExplanationMasks, MaskOptimizer};

use crate::autodiff::AutodiffError;
use crate::model::ModelError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("node index {index} outside {num_nodes} nodes")]
    InvalidNode { index: usize, num_nodes: usize },
    #[error("expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("{names} feature names for {features} features")]
    NameMismatch { names: usize, features: usize },
    #[error("sample has {sample} nodes but the graph has {graph}")]
    NodeMismatch { sample: usize, graph: usize },
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("invalid explain config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
