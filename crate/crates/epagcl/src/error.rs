//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop ({node}, {node}) is not allowed")]
    SelfLoop { node: usize },

    #[error("edge ({u}, {v}) has an endpoint out of range for {num_nodes} nodes")]
    EndpointOutOfRange {
        u: usize,
        v: usize,
        num_nodes: usize,
    },

    #[error("node {node} is isolated; every node must have degree >= 1")]
    IsolatedNode { node: usize },

    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },

    #[error("expected {expected} feature rows, got {got}")]
    FeatureRows { expected: usize, got: usize },

    #[error("operation requires node labels, but the graph has none")]
    MissingLabels,

    #[error("operation requires node features, but the graph has none")]
    MissingFeatures,

    #[error("edge ({u}, {v}) is not present in the graph")]
    EdgeNotFound { u: usize, v: usize },

    #[error("edge ({u}, {v}) is already present in the graph")]
    EdgeAlreadyPresent { u: usize, v: usize },

    #[error("removing this edge would isolate node {node}")]
    WouldIsolate { node: usize },

    #[error("degree must be >= 1, got 0")]
    ZeroDegree,

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("enumeration budget exceeded: max_nodes = {max_nodes} (limit {limit})")]
    EnumerationBudget { max_nodes: usize, limit: usize },

    #[error("infeasible construction: {0}")]
    Infeasible(String),

    #[error("non-finite gradient in parameter block `{param}`")]
    NonFiniteGradient { param: &'static str },

    #[error("non-finite loss at epoch {epoch}; config: {config}")]
    NonFiniteLoss { epoch: usize, config: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training split contains a single class; the probe cannot fit")]
    SingleClassSplit,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}
