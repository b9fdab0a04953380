//! Portable dataset directories: `meta.json`, `edges.u32le`, `features.f32le`,
//! `labels.u32le` and `split.json`.
//!
//! Loading is strict. Every binary file must have exactly the size implied by
//! `meta.json`, edges must be stored once as `(min, max)` without repeats or
//! self-loops, and the three split sets must be disjoint.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, Result};
use crate::graph::CsrGraph;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub num_undirected_edges: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graph: CsrGraph,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn meta(&self) -> Meta {
        Meta {
            name: self.name.clone(),
            num_nodes: self.num_nodes(),
            num_features: self.num_features(),
            num_classes: self.num_classes,
            num_undirected_edges: self.graph.num_edges(),
        }
    }

    /// The feature matrix in CSR form (bag-of-words rows are very sparse).
    pub fn sparse_features(&self) -> CsrMatrix {
        CsrMatrix::from_dense(&self.features)
    }

    /// Checks labels, feature shape and split sets against the graph.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.features.rows() != n {
            return Err(DatasetError::Meta(format!(
                "feature matrix has {} rows for {n} nodes",
                self.features.rows()
            ))
            .into());
        }
        if self.labels.len() != n {
            return Err(DatasetError::Meta(format!("{} labels for {n} nodes", self.labels.len())).into());
        }
        if let Some((node, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.num_classes) {
            return Err(DatasetError::LabelOutOfRange {
                node,
                label: label as u32,
                num_classes: self.num_classes,
            }
            .into());
        }
        for (i, &v) in self.features.data().iter().enumerate() {
            if !v.is_finite() {
                let f = self.features.cols();
                return Err(DatasetError::NonFiniteFeature {
                    node: i / f,
                    feature: i % f,
                }
                .into());
            }
        }
        check_split(&self.split, n)?;
        Ok(())
    }
}

fn check_split(split: &Split, n: usize) -> Result<(), DatasetError> {
    let mut owner: Vec<Option<&'static str>> = vec![None; n];
    for (set, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        for &v in ids {
            if v >= n {
                return Err(DatasetError::NodeOutOfRange {
                    file: "split.json",
                    id: v as u64,
                    num_nodes: n,
                });
            }
            match owner[v] {
                Some(prev) if prev == set => return Err(DatasetError::DuplicateSplitEntry { node: v, set }),
                Some(prev) => {
                    return Err(DatasetError::OverlappingSplit {
                        node: v,
                        first: prev,
                        second: set,
                    })
                }
                None => owner[v] = Some(set),
            }
        }
    }
    Ok(())
}

fn read_file(dir: &Path, name: &'static str) -> Result<Vec<u8>, DatasetError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path));
    }
    fs::read(&path).map_err(|source| DatasetError::Io { file: path, source })
}

fn parse_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &'static str) -> Result<T, DatasetError> {
    let bytes = read_file(dir, name)?;
    serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json {
        file: dir.join(name),
        source,
    })
}

fn expect_size(file: &'static str, bytes: &[u8], expected: usize) -> Result<(), DatasetError> {
    if bytes.len() != expected {
        return Err(DatasetError::SizeMismatch {
            file,
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

fn u32s(bytes: &[u8]) -> impl Iterator<Item = u32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta: Meta = parse_json(dir, "meta.json")?;
    let n = meta.num_nodes;
    if n == 0 || meta.num_features == 0 || meta.num_classes == 0 {
        return Err(DatasetError::Meta("num_nodes, num_features and num_classes must be positive".into()).into());
    }
    if u32::try_from(n).is_err() {
        return Err(DatasetError::Meta(format!("num_nodes {n} does not fit 32-bit ids")).into());
    }

    let edge_bytes = read_file(dir, "edges.u32le")?;
    expect_size("edges.u32le", &edge_bytes, meta.num_undirected_edges * 8)?;
    let ids: Vec<u32> = u32s(&edge_bytes).collect();
    let mut edges = Vec::with_capacity(meta.num_undirected_edges);
    let mut seen = std::collections::HashSet::with_capacity(meta.num_undirected_edges);
    for pair in ids.chunks_exact(2) {
        let (u, v) = (pair[0], pair[1]);
        for id in [u, v] {
            if id as usize >= n {
                return Err(DatasetError::NodeOutOfRange {
                    file: "edges.u32le",
                    id: id.into(),
                    num_nodes: n,
                }
                .into());
            }
        }
        if u == v {
            return Err(DatasetError::SelfLoop(u).into());
        }
        if u > v {
            return Err(DatasetError::UnorderedEdge(u, v).into());
        }
        if !seen.insert((u, v)) {
            return Err(DatasetError::DuplicateEdge(u, v).into());
        }
        edges.push((u as usize, v as usize));
    }
    let graph = CsrGraph::from_edges(n, &edges)?;

    let feat_bytes = read_file(dir, "features.f32le")?;
    expect_size("features.f32le", &feat_bytes, n * meta.num_features * 4)?;
    let data: Vec<f64> = feat_bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let features = Tensor::from_vec(n, meta.num_features, data)?;

    let label_bytes = read_file(dir, "labels.u32le")?;
    expect_size("labels.u32le", &label_bytes, n * 4)?;
    let labels: Vec<usize> = u32s(&label_bytes).map(|l| l as usize).collect();

    let split: Split = parse_json(dir, "split.json")?;

    let ds = Dataset {
        name: meta.name,
        graph,
        features,
        labels,
        num_classes: meta.num_classes,
        split,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `ds` in the portable format. Features are narrowed to 32-bit.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path: PathBuf = dir.join(name);
        let mut f = fs::File::create(path)?;
        f.write_all(bytes)?;
        Ok(())
    };
    write("meta.json", &serde_json::to_vec_pretty(&ds.meta())?)?;
    let mut edges = Vec::with_capacity(ds.graph.num_edges() * 8);
    for (u, v) in ds.graph.edges() {
        edges.extend_from_slice(&(u as u32).to_le_bytes());
        edges.extend_from_slice(&(v as u32).to_le_bytes());
    }
    write("edges.u32le", &edges)?;
    let feats: Vec<u8> = ds
        .features
        .data()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    write("features.f32le", &feats)?;
    let labels: Vec<u8> = ds.labels.iter().flat_map(|&l| (l as u32).to_le_bytes()).collect();
    write("labels.u32le", &labels)?;
    write("split.json", &serde_json::to_vec(&ds.split)?)?;
    Ok(())
}
