//! Wengert-list reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its output and whatever it needs
//! for the backward sweep. Nodes are only ever appended, so the list is
//! already in topological order and `backward` walks it in reverse.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels;
use crate::sparse::SparseOperator;
use crate::tensor::Tensor;

use super::ops::{self, Activation, EdgeList};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Spmm(Arc<SparseOperator>, usize),
    Transpose(usize),
    Activation(usize, Activation),
    Add(usize, usize),
    Scale(usize, f64),
    ConcatCols(usize, usize),
    RowMerge(Arc<[bool]>, usize, usize),
    GatherRows(usize, Arc<[usize]>),
    SliceRows(usize, usize),
    SegmentSoftmax(usize, Arc<EdgeList>),
    EdgeAggregate(usize, usize, Arc<EdgeList>),
    Sum(usize),
    CrossEntropy {
        logits: usize,
        labels: Arc<[usize]>,
        mask: Arc<[usize]>,
        probs: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    tracked: bool,
}

/// Records differentiable operations in execution order.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.push_shared(Arc::new(value), op, tracked)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::UntapedVar);
        }
        Ok(v.index)
    }

    fn tracked(&self, i: usize) -> bool {
        self.nodes[i].tracked
    }

    /// A gradient-tracked leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: impl Into<Arc<Tensor>>) -> Var {
        self.push_shared(value.into(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let i = self.index(v)?;
        Ok(&self.nodes[i].value)
    }

    pub fn shape(&self, v: Var) -> Result<(usize, usize)> {
        Ok(self.value(v)?.shape())
    }

    pub fn is_tracked(&self, v: Var) -> Result<bool> {
        let i = self.index(v)?;
        Ok(self.tracked(i))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = kernels::matmul(&self.nodes[ia].value, &self.nodes[ib].value)?;
        let tracked = self.tracked(ia) || self.tracked(ib);
        Ok(self.push(out, Op::MatMul(ia, ib), tracked))
    }

    /// Sparse-dense product `op * x`.
    pub fn spmm(&mut self, op: &Arc<SparseOperator>, x: Var) -> Result<Var> {
        let ix = self.index(x)?;
        let out = kernels::spmm(op.matrix(), &self.nodes[ix].value)?;
        let tracked = self.tracked(ix);
        Ok(self.push(out, Op::Spmm(Arc::clone(op), ix), tracked))
    }

    /// `op * w` where `op` is a constant sparse matrix (e.g. bag-of-words
    /// features) and `w` is typically a parameter.
    pub fn sparse_matmul(&mut self, op: &Arc<SparseOperator>, w: Var) -> Result<Var> {
        self.spmm(op, w)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.transpose();
        let tracked = self.tracked(ia);
        Ok(self.push(out, Op::Transpose(ia), tracked))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let ix = self.index(x)?;
        let out = ops::pointwise_activation(&self.nodes[ix].value, kind);
        let tracked = self.tracked(ix);
        Ok(self.push(out, Op::Activation(ix, kind), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        va.ensure_shape("add", vb)?;
        let mut out = (**va).clone();
        out.add_assign(vb);
        let tracked = self.tracked(ia) || self.tracked(ib);
        Ok(self.push(out, Op::Add(ia, ib), tracked))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.index(a)?;
        let mut out = (*self.nodes[ia].value).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        let tracked = self.tracked(ia);
        Ok(self.push(out, Op::Scale(ia, factor), tracked))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = ops::concat_cols(&self.nodes[ia].value, &self.nodes[ib].value)?;
        let tracked = self.tracked(ia) || self.tracked(ib);
        Ok(self.push(out, Op::ConcatCols(ia, ib), tracked))
    }

    /// Row `k` of the result is `low[k]` where `mask[k]`, else `high[k]`.
    pub fn row_merge(&mut self, mask: &Arc<[bool]>, low: Var, high: Var) -> Result<Var> {
        let (il, ih) = (self.index(low)?, self.index(high)?);
        let out = ops::row_merge(mask, &self.nodes[il].value, &self.nodes[ih].value)?;
        let tracked = self.tracked(il) || self.tracked(ih);
        Ok(self.push(out, Op::RowMerge(Arc::clone(mask), il, ih), tracked))
    }

    /// Output row `e` is row `indices[e]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: &Arc<[usize]>) -> Result<Var> {
        let ix = self.index(x)?;
        let src = &self.nodes[ix].value;
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                left: src.shape(),
                right: (bad, 0),
            });
        }
        let mut out = Tensor::zeros(indices.len(), src.cols());
        for (e, &i) in indices.iter().enumerate() {
            out.row_mut(e).copy_from_slice(src.row(i));
        }
        let tracked = self.tracked(ix);
        Ok(self.push(out, Op::GatherRows(ix, Arc::clone(indices)), tracked))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let ix = self.index(x)?;
        let src = &self.nodes[ix].value;
        if start + len > src.rows() {
            return Err(Error::Shape {
                op: "slice_rows",
                left: src.shape(),
                right: (start, len),
            });
        }
        let cols = src.cols();
        let data = src.data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::from_vec(len, cols, data)?;
        let tracked = self.tracked(ix);
        Ok(self.push(out, Op::SliceRows(ix, start), tracked))
    }

    /// Softmax of an `E x 1` score column within each target segment of `edges`.
    pub fn segment_softmax(&mut self, scores: Var, edges: &Arc<EdgeList>) -> Result<Var> {
        let is = self.index(scores)?;
        let s = &self.nodes[is].value;
        if s.shape() != (edges.len(), 1) {
            return Err(Error::Shape {
                op: "segment_softmax",
                left: s.shape(),
                right: (edges.len(), 1),
            });
        }
        let out = ops::segment_softmax(s.data(), edges.targets(), edges.num_nodes());
        let out = Tensor::from_vec(edges.len(), 1, out)?;
        let tracked = self.tracked(is);
        Ok(self.push(out, Op::SegmentSoftmax(is, Arc::clone(edges)), tracked))
    }

    /// `out[t] = sum over edges e into t of weights[e] * x[source(e)]`.
    pub fn edge_aggregate(&mut self, weights: Var, x: Var, edges: &Arc<EdgeList>) -> Result<Var> {
        let (iw, ix) = (self.index(weights)?, self.index(x)?);
        let (w, xv) = (&self.nodes[iw].value, &self.nodes[ix].value);
        if w.shape() != (edges.len(), 1) || xv.rows() != edges.num_nodes() {
            return Err(Error::Shape {
                op: "edge_aggregate",
                left: w.shape(),
                right: xv.shape(),
            });
        }
        let mut out = Tensor::zeros(edges.num_nodes(), xv.cols());
        for (e, (&s, &t)) in edges.sources().iter().zip(edges.targets()).enumerate() {
            let a = w.data()[e];
            let src = xv.row(s);
            for (o, &v) in out.row_mut(t).iter_mut().zip(src) {
                *o += a * v;
            }
        }
        let tracked = self.tracked(iw) || self.tracked(ix);
        Ok(self.push(out, Op::EdgeAggregate(iw, ix, Arc::clone(edges)), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.index(x)?;
        let out = Tensor::scalar(self.nodes[ix].value.sum());
        let tracked = self.tracked(ix);
        Ok(self.push(out, Op::Sum(ix), tracked))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits`, over the node indices in `mask`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &Arc<[usize]>, mask: &Arc<[usize]>) -> Result<Var> {
        let il = self.index(logits)?;
        let (loss, probs) = ops::cross_entropy(&self.nodes[il].value, labels, mask)?;
        let tracked = self.tracked(il);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                labels: Arc::clone(labels),
                mask: Arc::clone(mask),
                probs,
            },
            tracked,
        ))
    }

    /// Propagates d(loss)/d(node) back to every tracked leaf, then clears the
    /// tape. Variables recorded before the call are invalid afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let root = self.index(loss)?;
        let shape = self.nodes[root].value.shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(1.0));
        let mut leaves: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();

        for i in (0..=root).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, g, &mut grads, &mut leaves)?;
        }

        // Tracked leaves that the loss does not reach get an explicit zero.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tracked && matches!(node.op, Op::Leaf) && leaves[i].is_none() {
                let (r, c) = node.value.shape();
                leaves[i] = Some(Tensor::zeros(r, c));
            }
        }
        let tape = self.id;
        self.nodes.clear();
        self.id = fresh_id();
        Ok(Gradients { tape, grads: leaves })
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        leaves: &mut [Option<Tensor>],
    ) -> Result<()> {
        let nodes = &self.nodes;
        let mut send = |target: usize, grad: Tensor| {
            if nodes[target].tracked {
                accumulate(&mut grads[target], grad);
            }
        };
        match &nodes[i].op {
            Op::Leaf => accumulate(&mut leaves[i], g),
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                if nodes[*a].tracked {
                    send(*a, kernels::matmul(&g, &vb.transpose())?);
                }
                if nodes[*b].tracked {
                    send(*b, kernels::matmul(&va.transpose(), &g)?);
                }
            }
            Op::Spmm(op, x) => send(*x, kernels::spmm(op.transposed(), &g)?),
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Activation(x, kind) => {
                let mut dx = g;
                let input = &nodes[*x].value;
                for (d, &v) in dx.data_mut().iter_mut().zip(input.data()) {
                    *d *= kind.derivative(v);
                }
                send(*x, dx);
            }
            Op::Add(a, b) => {
                if nodes[*a].tracked {
                    send(*a, g.clone());
                }
                send(*b, g);
            }
            Op::Scale(a, factor) => {
                let mut da = g;
                da.data_mut().iter_mut().for_each(|v| *v *= factor);
                send(*a, da);
            }
            Op::ConcatCols(a, b) => {
                let left = nodes[*a].value.cols();
                let (da, db) = ops::split_cols(&g, left);
                send(*a, da);
                send(*b, db);
            }
            Op::RowMerge(mask, low, high) => {
                let mut dl = Tensor::zeros(g.rows(), g.cols());
                let mut dh = Tensor::zeros(g.rows(), g.cols());
                for (k, &is_low) in mask.iter().enumerate() {
                    let dst = if is_low { dl.row_mut(k) } else { dh.row_mut(k) };
                    dst.copy_from_slice(g.row(k));
                }
                send(*low, dl);
                send(*high, dh);
            }
            Op::GatherRows(x, indices) => {
                let src = &nodes[*x].value;
                let mut dx = Tensor::zeros(src.rows(), src.cols());
                for (e, &r) in indices.iter().enumerate() {
                    for (d, &v) in dx.row_mut(r).iter_mut().zip(g.row(e)) {
                        *d += v;
                    }
                }
                send(*x, dx);
            }
            Op::SliceRows(x, start) => {
                let src = &nodes[*x].value;
                let mut dx = Tensor::zeros(src.rows(), src.cols());
                let cols = src.cols();
                dx.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                send(*x, dx);
            }
            Op::SegmentSoftmax(s, edges) => {
                let y = nodes[i].value.data();
                let mut dot = vec![0.0; edges.num_nodes()];
                for ((&t, &yv), &gv) in edges.targets().iter().zip(y).zip(g.data()) {
                    dot[t] += yv * gv;
                }
                let ds: Vec<f64> = edges
                    .targets()
                    .iter()
                    .zip(y)
                    .zip(g.data())
                    .map(|((&t, &yv), &gv)| yv * (gv - dot[t]))
                    .collect();
                send(*s, Tensor::from_vec(ds.len(), 1, ds)?);
            }
            Op::EdgeAggregate(w, x, edges) => {
                let (wv, xv) = (&nodes[*w].value, &nodes[*x].value);
                if nodes[*w].tracked {
                    let dw: Vec<f64> = edges
                        .sources()
                        .iter()
                        .zip(edges.targets())
                        .map(|(&s, &t)| xv.row(s).iter().zip(g.row(t)).map(|(a, b)| a * b).sum())
                        .collect();
                    send(*w, Tensor::from_vec(dw.len(), 1, dw)?);
                }
                if nodes[*x].tracked {
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for (e, (&s, &t)) in edges.sources().iter().zip(edges.targets()).enumerate() {
                        let a = wv.data()[e];
                        let gt = g.row(t);
                        for (d, &v) in dx.row_mut(s).iter_mut().zip(gt) {
                            *d += a * v;
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::Sum(x) => {
                let (r, c) = nodes[*x].value.shape();
                send(*x, Tensor::filled(r, c, g.item()));
            }
            Op::CrossEntropy {
                logits,
                labels,
                mask,
                probs,
            } => {
                let (r, c) = nodes[*logits].value.shape();
                let mut dl = Tensor::zeros(r, c);
                let scale = g.item() / mask.len() as f64;
                for (m, &node) in mask.iter().enumerate() {
                    let row = dl.row_mut(node);
                    for (j, d) in row.iter_mut().enumerate() {
                        let target = if j == labels[node] { 1.0 } else { 0.0 };
                        *d += scale * (probs.get(m, j) - target);
                    }
                }
                send(*logits, dl);
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => *slot = Some(grad),
    }
}

/// Gradients of the tracked leaves of one tape, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a tracked leaf; `None` for constants and intermediate values.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Result<Tensor> {
        if v.tape != self.tape {
            return Err(Error::UntapedVar);
        }
        self.grads
            .get_mut(v.index)
            .and_then(Option::take)
            .ok_or(Error::UntapedVar)
    }
}
