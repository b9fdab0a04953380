use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty evaluation mask")]
    EmptyMask,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("variable does not belong to this tape (tape was cleared or it came from another tape)")]
    UntapedVar,

    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite loss at epoch {epoch} (seed {seed})")]
    NonFiniteLoss { epoch: usize, seed: u64 },

    #[error("degenerate degree distribution: fewer than two distinct degrees")]
    DegenerateDistribution,

    #[error("partition has empty group ({0} group is empty)")]
    EmptyGroup(&'static str),

    #[error("no test nodes fall in the {0}-degree group")]
    EmptyGroupIntersection(&'static str),

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal max {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("subgraph has {nodes} nodes, above the dense eigensolver limit of {limit}; sample the group or raise GNNSTRAT_DENSE_EIG_LIMIT")]
    DenseLimit { nodes: usize, limit: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Failures while reading or validating a portable dataset directory.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}: expected {expected} bytes from meta.json, found {actual}")]
    SizeMismatch {
        file: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("{file}: node id {id} out of range for {num_nodes} nodes")]
    NodeOutOfRange {
        file: &'static str,
        id: u64,
        num_nodes: usize,
    },

    #[error("edges.u32le: self-loop on node {0}")]
    SelfLoop(u32),

    #[error("edges.u32le: duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),

    #[error("edges.u32le: edge ({0}, {1}) not stored as (min, max)")]
    UnorderedEdge(u32, u32),

    #[error("labels.u32le: node {node} has class {label}, but num_classes is {num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: u32,
        num_classes: usize,
    },

    #[error("split.json: node {node} appears in both {first} and {second}")]
    OverlappingSplit {
        node: usize,
        first: &'static str,
        second: &'static str,
    },

    #[error("split.json: node {node} listed twice in {set}")]
    DuplicateSplitEntry { node: usize, set: &'static str },

    #[error("features.f32le: non-finite value at node {node}, feature {feature}")]
    NonFiniteFeature { node: usize, feature: usize },

    #[error("meta.json: {0}")]
    Meta(String),

    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: {source}")]
    Json {
        file: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
