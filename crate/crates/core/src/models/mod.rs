//! Two-layer GCN, GAT and GraphSAGE models, each either with one weight set
//! shared by all nodes or with separate low-degree and high-degree sets.

mod gat;
mod gcn;
mod sage;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, Activation, EdgeList, Tape, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::sparse::{CsrMatrix, SparseOperator};
use crate::stratify::DegreePartition;
use crate::tensor::Tensor;

pub use gat::attention_coefficients;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    Sage,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Gcn, Arch::Gat, Arch::Sage];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Stratified,
    /// Stratified weights over a random partition with degree-matched sizes.
    Random,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Stratified, Variant::Random];

    pub fn is_grouped(self) -> bool {
        self != Variant::Baseline
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "sage" => Ok(Arch::Sage),
            _ => Err(Error::InvalidArgument(format!("unknown model {s:?} (expected gcn, gat or sage)"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::Sage => "sage",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "stratified" => Ok(Variant::Stratified),
            "random" | "random_split" => Ok(Variant::Random),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant {s:?} (expected baseline, stratified or random)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Stratified => "stratified",
            Variant::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub variant: Variant,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Attention heads per GAT layer. Hidden layers concatenate heads, the
    /// output layer averages them.
    pub gat_heads: usize,
    pub leaky_slope: f64,
}

impl ModelSpec {
    pub fn new(arch: Arch, variant: Variant, input_dim: usize, num_classes: usize) -> Self {
        Self {
            arch,
            variant,
            num_layers: 2,
            hidden_dim: 32,
            input_dim,
            num_classes,
            gat_heads: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.num_layers == 0 || self.hidden_dim == 0 || self.input_dim == 0 || self.num_classes == 0 {
            return bad("layers, hidden_dim, input_dim and num_classes must all be at least 1");
        }
        if self.gat_heads == 0 {
            return bad("gat_heads must be at least 1");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        Ok(())
    }

    pub fn heads(&self) -> usize {
        if self.arch == Arch::Gat {
            self.gat_heads
        } else {
            1
        }
    }

    pub fn groups(&self) -> usize {
        if self.variant.is_grouped() {
            2
        } else {
            1
        }
    }

    fn kinds(&self) -> usize {
        if self.arch == Arch::Gat {
            2
        } else {
            1
        }
    }

    /// `(F_in, F_out)` of layer `l`, per head.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let f_in = if l == 0 { self.input_dim } else { self.hidden_dim * self.heads() };
        let f_out = if l + 1 == self.num_layers { self.num_classes } else { self.hidden_dim };
        (f_in, f_out)
    }

    fn params_per_layer(&self) -> usize {
        self.groups() * self.heads() * self.kinds()
    }

    pub fn num_params(&self) -> usize {
        self.num_layers * self.params_per_layer()
    }

    /// Position of one parameter in declaration order: layer, group, head,
    /// then weight before attention vector.
    pub fn param_index(&self, layer: usize, group: usize, head: usize, kind: ParamKind) -> usize {
        let k = match kind {
            ParamKind::Weight => 0,
            ParamKind::Attention => 1,
        };
        layer * self.params_per_layer() + (group * self.heads() + head) * self.kinds() + k
    }

    /// `(name, rows, cols)` of every parameter in declaration order.
    pub fn param_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in 0..self.num_layers {
            let (f_in, f_out) = self.layer_dims(l);
            for g in 0..self.groups() {
                let group = match (self.groups(), g) {
                    (1, _) => "shared",
                    (_, 0) => "low",
                    _ => "high",
                };
                for h in 0..self.heads() {
                    let head = if self.heads() > 1 { format!(".head{h}") } else { String::new() };
                    let (rows, cols) = match self.arch {
                        Arch::Gcn | Arch::Gat => (f_in, f_out),
                        Arch::Sage => (f_out, 2 * f_in),
                    };
                    out.push((format!("layer{l}.{group}{head}.w"), rows, cols));
                    if self.arch == Arch::Gat {
                        out.push((format!("layer{l}.{group}{head}.a"), 2 * f_out, 1));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Attention,
}

/// All parameters of a model, in the order given by
/// [`ModelSpec::param_layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    spec: ModelSpec,
    params: Vec<Tensor>,
}

impl ModelWeights {
    /// Glorot-uniform initialisation, drawn in declaration order from one
    /// ChaCha8 stream seeded with `seed`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .param_layout()
            .into_iter()
            .map(|(_, r, c)| glorot_uniform(r, c, &mut rng))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            params,
        })
    }

    pub fn from_params(spec: &ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.param_layout();
        if layout.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, r, c), p) in layout.iter().zip(&params) {
            if p.shape() != (*r, *c) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {name} should be {r}x{c}, got {}x{}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }

    pub fn names(&self) -> Vec<String> {
        self.spec.param_layout().into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn get(&self, layer: usize, group: usize, head: usize, kind: ParamKind) -> &Tensor {
        &self.params[self.spec.param_index(layer, group, head, kind)]
    }

    pub fn get_mut(&mut self, layer: usize, group: usize, head: usize, kind: ParamKind) -> &mut Tensor {
        let i = self.spec.param_index(layer, group, head, kind);
        &mut self.params[i]
    }

    /// Copies every low-group parameter over its high-group counterpart.
    pub fn tie_groups(&mut self) {
        if self.spec.groups() < 2 {
            return;
        }
        for l in 0..self.spec.num_layers {
            for h in 0..self.spec.heads() {
                for kind in [ParamKind::Weight, ParamKind::Attention] {
                    if kind == ParamKind::Attention && self.spec.arch != Arch::Gat {
                        continue;
                    }
                    let low = self.get(l, 0, h, kind).clone();
                    *self.get_mut(l, 1, h, kind) = low;
                }
            }
        }
    }

    /// The single-group weights equal to this model's low group.
    pub fn low_group_as_baseline(&self) -> ModelWeights {
        let mut spec = self.spec.clone();
        spec.variant = Variant::Baseline;
        let mut params = Vec::with_capacity(spec.num_params());
        for l in 0..spec.num_layers {
            for h in 0..spec.heads() {
                params.push(self.get(l, 0, h, ParamKind::Weight).clone());
                if spec.arch == Arch::Gat {
                    params.push(self.get(l, 0, h, ParamKind::Attention).clone());
                }
            }
        }
        ModelWeights { spec, params }
    }
}

/// Graph-derived operators shared by every forward pass over one dataset.
/// Each is built on first use.
pub struct GraphContext {
    graph: CsrGraph,
    features: Arc<SparseOperator>,
    adjacency: OnceLock<Arc<SparseOperator>>,
    mean_adjacency: OnceLock<Arc<SparseOperator>>,
    attention_edges: OnceLock<Arc<EdgeList>>,
    sage_input: OnceLock<Arc<SparseOperator>>,
}

impl GraphContext {
    pub fn new(graph: &CsrGraph, features: &Tensor) -> Result<Self> {
        if features.rows() != graph.num_nodes() {
            return Err(Error::Shape {
                op: "GraphContext features",
                left: features.shape(),
                right: (graph.num_nodes(), features.cols()),
            });
        }
        Ok(Self {
            graph: graph.clone(),
            features: Arc::new(SparseOperator::new(CsrMatrix::from_dense(features))),
            adjacency: OnceLock::new(),
            mean_adjacency: OnceLock::new(),
            attention_edges: OnceLock::new(),
            sage_input: OnceLock::new(),
        })
    }

    pub fn graph(&self) -> &CsrGraph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Arc<SparseOperator> {
        &self.features
    }

    pub fn adjacency(&self) -> &Arc<SparseOperator> {
        self.adjacency
            .get_or_init(|| Arc::new(SparseOperator::new(self.graph.renormalized_adjacency())))
    }

    pub fn mean_adjacency(&self) -> &Arc<SparseOperator> {
        self.mean_adjacency
            .get_or_init(|| Arc::new(SparseOperator::new(self.graph.mean_adjacency())))
    }

    pub fn attention_edges(&self) -> &Arc<EdgeList> {
        self.attention_edges
            .get_or_init(|| Arc::new(self.graph.attention_edges()))
    }

    /// `[X | M X]` with `M` the mean adjacency, as a sparse operator.
    pub fn sage_input(&self) -> &Arc<SparseOperator> {
        self.sage_input.get_or_init(|| {
            let x = self.features.matrix();
            let mx = sparse_product(self.mean_adjacency().matrix(), x);
            Arc::new(SparseOperator::new(hconcat(x, &mx)))
        })
    }
}

/// Sparse-sparse product with a dense accumulator per row.
fn sparse_product(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut acc = vec![0.0; b.cols()];
    let mut touched = vec![false; b.cols()];
    let mut cols_buf = Vec::new();
    let (mut row_ptr, mut col_idx, mut values) = (vec![0], Vec::new(), Vec::new());
    for r in 0..a.rows() {
        let (ac, av) = a.row(r);
        for (&k, &w) in ac.iter().zip(av) {
            let (bc, bv) = b.row(k);
            for (&c, &x) in bc.iter().zip(bv) {
                if !touched[c] {
                    touched[c] = true;
                    cols_buf.push(c);
                }
                acc[c] += w * x;
            }
        }
        cols_buf.sort_unstable();
        for &c in &cols_buf {
            if acc[c] != 0.0 {
                col_idx.push(c);
                values.push(acc[c]);
            }
            acc[c] = 0.0;
            touched[c] = false;
        }
        cols_buf.clear();
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::new(a.rows(), b.cols(), row_ptr, col_idx, values).expect("rows built sorted")
}

fn hconcat(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let (mut row_ptr, mut col_idx, mut values) = (vec![0], Vec::new(), Vec::new());
    for r in 0..a.rows() {
        let (ac, av) = a.row(r);
        col_idx.extend_from_slice(ac);
        values.extend_from_slice(av);
        let (bc, bv) = b.row(r);
        col_idx.extend(bc.iter().map(|&c| c + a.cols()));
        values.extend_from_slice(bv);
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::new(a.rows(), a.cols() + b.cols(), row_ptr, col_idx, values).expect("rows built sorted")
}

/// Input of a layer: the sparse feature matrix for the first layer, a
/// taped dense activation afterwards.
#[derive(Clone, Copy)]
pub(crate) enum LayerInput<'a> {
    Features(&'a Arc<SparseOperator>),
    Hidden(Var),
}

impl LayerInput<'_> {
    /// `H * W`.
    pub(crate) fn times(self, tape: &mut Tape, w: Var) -> Result<Var> {
        match self {
            LayerInput::Features(x) => tape.spmm(x, w),
            LayerInput::Hidden(h) => tape.matmul(h, w),
        }
    }
}

/// Everything a layer needs besides its own parameters.
pub(crate) struct LayerArgs<'a> {
    pub spec: &'a ModelSpec,
    pub ctx: &'a GraphContext,
    pub partition: Option<&'a DegreePartition>,
    pub layer: usize,
    pub activation: Option<Activation>,
}

impl LayerArgs<'_> {
    pub(crate) fn param(&self, vars: &[Var], group: usize, head: usize, kind: ParamKind) -> Var {
        vars[self.spec.param_index(self.layer, group, head, kind)]
    }

    /// Per-group outputs combined by the node partition.
    pub(crate) fn merge_nodes(&self, tape: &mut Tape, outs: &[Var]) -> Result<Var> {
        match (outs, self.partition) {
            ([single], _) => Ok(*single),
            ([low, high], Some(p)) => tape.row_merge(p.low_mask(), *low, *high),
            _ => unreachable!("grouped layers always carry a partition"),
        }
    }

    pub(crate) fn finish(&self, tape: &mut Tape, out: Var) -> Result<Var> {
        match self.activation {
            Some(kind) => tape.activation(out, kind),
            None => Ok(out),
        }
    }
}

fn check_partition(spec: &ModelSpec, ctx: &GraphContext, partition: Option<&DegreePartition>) -> Result<()> {
    match (spec.variant.is_grouped(), partition) {
        (false, _) => Ok(()),
        (true, None) => Err(Error::InvalidArgument(format!(
            "variant {} needs a degree partition",
            spec.variant
        ))),
        (true, Some(p)) if p.len() != ctx.num_nodes() => Err(Error::InvalidArgument(format!(
            "partition covers {} nodes but the graph has {}",
            p.len(),
            ctx.num_nodes()
        ))),
        (true, Some(_)) => Ok(()),
    }
}

/// Records the full forward pass on `tape` and returns the `n x C` logits.
/// `vars` holds the parameters in declaration order.
pub fn forward_on_tape(
    tape: &mut Tape,
    spec: &ModelSpec,
    vars: &[Var],
    ctx: &GraphContext,
    partition: Option<&DegreePartition>,
) -> Result<Var> {
    spec.validate()?;
    check_partition(spec, ctx, partition)?;
    if vars.len() != spec.num_params() {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameters, got {}",
            spec.num_params(),
            vars.len()
        )));
    }
    if ctx.num_features() != spec.input_dim {
        return Err(Error::Shape {
            op: "model input",
            left: (ctx.num_nodes(), ctx.num_features()),
            right: (ctx.num_nodes(), spec.input_dim),
        });
    }
    let partition = if spec.variant.is_grouped() { partition } else { None };
    let mut input = LayerInput::Features(ctx.features());
    let mut out = None;
    for layer in 0..spec.num_layers {
        let last = layer + 1 == spec.num_layers;
        let args = LayerArgs {
            spec,
            ctx,
            partition,
            layer,
            activation: (!last).then_some(Activation::Relu),
        };
        let h = match spec.arch {
            Arch::Gcn => gcn::layer(tape, &args, input, vars)?,
            Arch::Gat => gat::layer(tape, &args, input, vars)?,
            Arch::Sage => sage::layer(tape, &args, input, vars)?,
        };
        input = LayerInput::Hidden(h);
        out = Some(h);
    }
    Ok(out.expect("at least one layer"))
}

/// Logits of `weights` on the graph, without recording gradients.
pub fn model_forward(
    weights: &ModelWeights,
    ctx: &GraphContext,
    partition: Option<&DegreePartition>,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = weights
        .params()
        .iter()
        .map(|p| tape.constant(p.clone()))
        .collect();
    let logits = forward_on_tape(&mut tape, weights.spec(), &vars, ctx, partition)?;
    Ok(tape.value(logits)?.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_orders_groups_and_heads() {
        let mut spec = ModelSpec::new(Arch::Gat, Variant::Stratified, 5, 3);
        spec.gat_heads = 2;
        spec.hidden_dim = 4;
        let names: Vec<_> = spec.param_layout().into_iter().map(|p| (p.0, p.1, p.2)).collect();
        assert_eq!(names.len(), spec.num_params());
        assert_eq!(names[0], ("layer0.low.head0.w".into(), 5, 4));
        assert_eq!(names[1], ("layer0.low.head0.a".into(), 8, 1));
        assert_eq!(names[4], ("layer0.high.head0.w".into(), 5, 4));
        assert_eq!(names[8], ("layer1.low.head0.w".into(), 8, 3));
        assert_eq!(spec.param_index(1, 1, 1, ParamKind::Attention), 15);
    }

    #[test]
    fn sage_weight_is_out_by_twice_in() {
        let spec = ModelSpec::new(Arch::Sage, Variant::Baseline, 6, 2);
        let layout = spec.param_layout();
        assert_eq!((layout[0].1, layout[0].2), (32, 12));
        assert_eq!((layout[1].1, layout[1].2), (2, 64));
    }

    #[test]
    fn parse_and_display() {
        for a in Arch::ALL {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        }
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("random_split".parse::<Variant>().unwrap(), Variant::Random);
        assert!("mlp".parse::<Arch>().is_err());
    }

    #[test]
    fn sparse_helpers_match_dense() {
        let a = Tensor::from_rows(&[[0.0, 1.0, 0.5], [2.0, 0.0, 0.0]]);
        let b = Tensor::from_rows(&[[1.0, 0.0], [0.0, 3.0], [4.0, 0.0]]);
        let (sa, sb) = (CsrMatrix::from_dense(&a), CsrMatrix::from_dense(&b));
        let prod = sparse_product(&sa, &sb).to_dense();
        assert_eq!(prod, crate::kernels::matmul(&a, &b).unwrap());
        let cat = hconcat(&sa, &CsrMatrix::from_dense(&prod)).to_dense();
        assert_eq!(cat, crate::autodiff::concat_cols(&a, &prod).unwrap());
    }
}
