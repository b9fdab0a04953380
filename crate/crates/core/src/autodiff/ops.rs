//! Forward kernels shared by the tape and by callers that need plain values.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default negative slope for LeakyReLU inside attention scores.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    /// ELU with alpha = 1.
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative at `x`; at the kink the negative-side value is used.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

pub fn pointwise_activation(x: &Tensor, kind: Activation) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    out
}

pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "concat_cols",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let cols = a.cols() + b.cols();
    let mut out = Tensor::zeros(a.rows(), cols);
    for r in 0..a.rows() {
        let dst = out.row_mut(r);
        dst[..a.cols()].copy_from_slice(a.row(r));
        dst[a.cols()..].copy_from_slice(b.row(r));
    }
    Ok(out)
}

pub(crate) fn split_cols(t: &Tensor, left: usize) -> (Tensor, Tensor) {
    let right = t.cols() - left;
    let mut a = Tensor::zeros(t.rows(), left);
    let mut b = Tensor::zeros(t.rows(), right);
    for r in 0..t.rows() {
        let src = t.row(r);
        a.row_mut(r).copy_from_slice(&src[..left]);
        b.row_mut(r).copy_from_slice(&src[left..]);
    }
    (a, b)
}

pub fn row_merge(mask: &[bool], low: &Tensor, high: &Tensor) -> Result<Tensor> {
    if low.shape() != high.shape() || mask.len() != low.rows() {
        return Err(Error::Shape {
            op: "row_merge",
            left: low.shape(),
            right: (mask.len(), high.cols()),
        });
    }
    let mut out = Tensor::zeros(low.rows(), low.cols());
    for (k, &is_low) in mask.iter().enumerate() {
        let src = if is_low { low.row(k) } else { high.row(k) };
        out.row_mut(k).copy_from_slice(src);
    }
    Ok(out)
}

/// Per-segment softmax: `exp(s - max) / sum(exp(s - max))` over the entries
/// sharing a segment id. Segments without entries are simply absent.
pub fn segment_softmax(scores: &[f64], segments: &[usize], num_segments: usize) -> Vec<f64> {
    debug_assert_eq!(scores.len(), segments.len());
    let mut max = vec![f64::NEG_INFINITY; num_segments];
    for (&s, &g) in scores.iter().zip(segments) {
        if s > max[g] {
            max[g] = s;
        }
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(segments)
        .map(|(&s, &g)| (s - max[g]).exp())
        .collect();
    let mut total = vec![0.0; num_segments];
    for (&e, &g) in out.iter().zip(segments) {
        total[g] += e;
    }
    for (e, &g) in out.iter_mut().zip(segments) {
        *e /= total[g];
    }
    out
}

/// Masked mean cross-entropy. Returns the loss and the softmax rows of the
/// masked nodes (in mask order).
pub fn cross_entropy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<(f64, Tensor)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != logits.rows() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    let classes = logits.cols();
    let mut probs = Tensor::zeros(mask.len(), classes);
    let mut total = 0.0;
    for (m, &node) in mask.iter().enumerate() {
        if node >= logits.rows() {
            return Err(Error::Shape {
                op: "cross_entropy mask",
                left: logits.shape(),
                right: (node, 0),
            });
        }
        let label = labels[node];
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let row = logits.row(node);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[label];
        for (p, &v) in probs.row_mut(m).iter_mut().zip(row) {
            *p = (v - lse).exp();
        }
    }
    Ok((total / mask.len() as f64, probs))
}

/// Directed edges `source -> target`, used for attention scores and
/// weighted neighbour aggregation. Segments for the softmax are the targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    sources: std::sync::Arc<[usize]>,
    targets: std::sync::Arc<[usize]>,
    num_nodes: usize,
}

impl EdgeList {
    pub fn new(sources: Vec<usize>, targets: Vec<usize>, num_nodes: usize) -> Result<Self> {
        if sources.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "edge list has {} sources but {} targets",
                sources.len(),
                targets.len()
            )));
        }
        if let Some(&bad) = sources.iter().chain(&targets).find(|&&v| v >= num_nodes) {
            return Err(Error::InvalidArgument(format!(
                "edge endpoint {bad} out of range for {num_nodes} nodes"
            )));
        }
        Ok(Self {
            sources: sources.into(),
            targets: targets.into(),
            num_nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}
