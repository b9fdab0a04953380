//! Degree-stratified graph neural networks.
//!
//! GCN, GAT and GraphSAGE layers whose weights are split between low-degree
//! and high-degree nodes, trained full-batch with a small reverse-mode
//! autodiff engine over 64-bit dense and sparse matrices.

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod kernels;
pub mod models;
pub mod sparse;
pub mod spectral;
pub mod stratify;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use dataset::{load_dataset, save_dataset, Dataset, Meta, Split};
pub use error::{DatasetError, Error, Result};
pub use graph::{CsrGraph, DegreeVector, Subgraph};
pub use sparse::{CsrMatrix, SparseOperator};
pub use stratify::{
    otsu_threshold, partition_by_degree, random_partition, DegreeHistogram, DegreePartition, OtsuScale, ThetaMode,
};
pub use tensor::Tensor;
