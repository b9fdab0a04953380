//! Undirected graphs in CSR form and the propagation matrices built on them.

use crate::autodiff::EdgeList;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// An undirected, unweighted graph. Each edge is stored in both endpoint
/// rows; rows are sorted, free of duplicates and free of self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

/// Structural node degrees (self-loops excluded).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeVector(Vec<usize>);

impl DegreeVector {
    pub fn new(degrees: Vec<usize>) -> Self {
        Self(degrees)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for DegreeVector {
    type Output = usize;

    fn index(&self, v: usize) -> &usize {
        &self.0[v]
    }
}

/// Result of [`CsrGraph::induced_subgraph`].
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: CsrGraph,
    /// Original id of each subgraph node, ascending.
    pub new_to_old: Vec<usize>,
    /// Subgraph id of each original node, if kept.
    pub old_to_new: Vec<Option<usize>>,
}

impl CsrGraph {
    /// Builds a graph from undirected edges listed once each, in either
    /// orientation. Self-loops and repeated edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted_unique(n, &pairs))
    }

    /// Like [`from_edges`](Self::from_edges) but silently drops self-loops
    /// and repeats. Used by generators.
    pub fn from_edges_lenient(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        if let Some(&(u, v)) = pairs.iter().find(|(_, v)| *v >= n) {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) out of range for {n} nodes"
            )));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted_unique(n, &pairs))
    }

    fn from_sorted_unique(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(u, v) in pairs {
            counts[u + 1] += 1;
            counts[v + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; 2 * pairs.len()];
        for &(u, v) in pairs {
            col_idx[next[u]] = v;
            next[u] += 1;
            col_idx[next[v]] = u;
            next[v] += 1;
        }
        for v in 0..n {
            col_idx[row_ptr[v]..row_ptr[v + 1]].sort_unstable();
        }
        let g = Self { n, row_ptr, col_idx };
        debug_assert!(g.validate().is_ok());
        g
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
        }
    }

    /// Checks every structural invariant: offsets, sorted unique rows, no
    /// self-loops, symmetry.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        if self.row_ptr.len() != self.n + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr must have n + 1 entries starting at 0".into());
        }
        if self.row_ptr[self.n] != self.col_idx.len() {
            return bad("row_ptr[n] must equal col_idx length".into());
        }
        for v in 0..self.n {
            if self.row_ptr[v] > self.row_ptr[v + 1] {
                return bad(format!("row_ptr decreases at node {v}"));
            }
            let nbrs = self.neighbors(v);
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbours of node {v} not strictly ascending"));
            }
            for &u in nbrs {
                if u >= self.n {
                    return bad(format!("neighbour {u} of node {v} out of range"));
                }
                if u == v {
                    return bad(format!("self-loop on node {v}"));
                }
                if self.neighbors(u).binary_search(&v).is_err() {
                    return bad(format!("edge ({v}, {u}) has no reverse"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(min, max)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    pub fn degrees(&self) -> DegreeVector {
        DegreeVector((0..self.n).map(|v| self.degree(v)).collect())
    }

    /// `D~^{-1/2} (A + I) D~^{-1/2}` with `D~ = D + I`.
    pub fn renormalized_adjacency(&self) -> CsrMatrix {
        let dt: Vec<f64> = (0..self.n).map(|v| (self.degree(v) + 1) as f64).collect();
        self.with_self_loops(|u, v| 1.0 / (dt[u] * dt[v]).sqrt())
    }

    /// Row-normalised adjacency without self-loops: row `v` averages the
    /// neighbours of `v`. Rows of isolated nodes are empty.
    pub fn mean_adjacency(&self) -> CsrMatrix {
        let mut values = Vec::with_capacity(self.col_idx.len());
        for v in 0..self.n {
            let w = 1.0 / self.degree(v).max(1) as f64;
            values.extend(std::iter::repeat_n(w, self.degree(v)));
        }
        CsrMatrix::new(self.n, self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
            .expect("graph rows are valid CSR rows")
    }

    /// CSR of `A + I` with entry values `value(row, col)`.
    fn with_self_loops(&self, value: impl Fn(usize, usize) -> f64) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.col_idx.len() + self.n);
        let mut values = Vec::with_capacity(self.col_idx.len() + self.n);
        row_ptr.push(0);
        for v in 0..self.n {
            let nbrs = self.neighbors(v);
            let split = nbrs.partition_point(|&u| u < v);
            for &u in nbrs[..split].iter().chain(std::iter::once(&v)).chain(&nbrs[split..]) {
                col_idx.push(u);
                values.push(value(v, u));
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix::new(self.n, self.n, row_ptr, col_idx, values).expect("rows stay sorted")
    }

    /// Directed attention edges `j -> k` for `j` in `N(k) + {k}`, grouped by
    /// target `k` and ascending in `j` within a target.
    pub fn attention_edges(&self) -> EdgeList {
        let pattern = self.with_self_loops(|_, _| 1.0);
        let mut sources = Vec::with_capacity(pattern.nnz());
        let mut targets = Vec::with_capacity(pattern.nnz());
        for k in 0..self.n {
            let (cols, _) = pattern.row(k);
            sources.extend_from_slice(cols);
            targets.extend(std::iter::repeat_n(k, cols.len()));
        }
        EdgeList::new(sources, targets, self.n).expect("endpoints in range")
    }

    /// Subgraph on `nodes` keeping edges with both endpoints inside, relabelled
    /// in ascending order of original id.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Subgraph> {
        if let Some(&bad) = nodes.iter().find(|&&v| v >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "node {bad} out of range for {} nodes",
                self.n
            )));
        }
        let mut new_to_old = nodes.to_vec();
        new_to_old.sort_unstable();
        new_to_old.dedup();
        let mut old_to_new = vec![None; self.n];
        for (new, &old) in new_to_old.iter().enumerate() {
            old_to_new[old] = Some(new);
        }
        let mut row_ptr = Vec::with_capacity(new_to_old.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for &old in &new_to_old {
            // Relabelling is monotone, so rows stay sorted.
            col_idx.extend(self.neighbors(old).iter().filter_map(|&u| old_to_new[u]));
            row_ptr.push(col_idx.len());
        }
        let graph = CsrGraph {
            n: new_to_old.len(),
            row_ptr,
            col_idx,
        };
        debug_assert!(graph.validate().is_ok());
        Ok(Subgraph {
            graph,
            new_to_old,
            old_to_new,
        })
    }

    /// Node sets of the connected components, each ascending, ordered by
    /// smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = id;
                        members.push(u);
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}
