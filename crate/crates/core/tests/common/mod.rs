#![allow(dead_code)]

use gnnstrat_core::autodiff::{Tape, Var};
use gnnstrat_core::models::{Arch, ModelSpec, ModelWeights, ParamKind};
use gnnstrat_core::{CsrGraph, DegreePartition, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> CsrGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    CsrGraph::from_edges(n, &edges).unwrap()
}

pub fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_sparse_tensor(rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < density { rng.gen_range(-1.0..1.0) } else { 0.0 })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// A partition with both groups nonempty, drawn node by node.
pub fn random_mask_partition(n: usize, rng: &mut impl Rng) -> DegreePartition {
    loop {
        let mask: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        if let Ok(p) = DegreePartition::from_low_mask(mask, None) {
            return p;
        }
    }
}

/// Textbook triple-loop product.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols(), b.rows());
    let mut out = Tensor::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// `D~^{-1/2} (A + I) D~^{-1/2}` built densely from the adjacency lists.
pub fn dense_renormalized(g: &CsrGraph) -> Tensor {
    let n = g.num_nodes();
    let mut a = Tensor::identity(n);
    for (u, v) in g.edges() {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let dinv: Vec<f64> = (0..n)
        .map(|r| 1.0 / a.row(r).iter().sum::<f64>().sqrt())
        .collect();
    let mut out = Tensor::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, dinv[r] * a.get(r, c) * dinv[c]);
        }
    }
    out
}

/// `|a - b| / max(|a|, |b|, 1e-6)`. The floor keeps finite-difference
/// round-off (about 1e-11 here) from dominating for near-zero gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between taped gradients of `f` and central
/// differences with step `h`, over every entry of every parameter.
pub fn fd_max_rel_err(params: &[Tensor], h: f64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.take(v).unwrap()).collect();

    let eval = |ps: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&mut tape, &vars).unwrap();
        tape.value(loss).unwrap().item()
    };
    let mut worst = 0.0f64;
    let mut ps = params.to_vec();
    for (i, g) in analytic.iter().enumerate() {
        for k in 0..ps[i].len() {
            let orig = ps[i].data()[k];
            ps[i].data_mut()[k] = orig + h;
            let up = eval(&ps);
            ps[i].data_mut()[k] = orig - h;
            let down = eval(&ps);
            ps[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(g.data()[k], numeric));
        }
    }
    worst
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn group_of(partition: Option<&DegreePartition>, v: usize) -> usize {
    match partition {
        Some(p) if !p.is_low(v) => 1,
        _ => 0,
    }
}

fn row_times(h: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|j| h.iter().enumerate().map(|(k, &x)| x * w.get(k, j)).sum())
        .collect()
}

/// One layer (single head) of `arch`, before activation, by per-node loops.
pub fn naive_layer(
    arch: Arch,
    g: &CsrGraph,
    h: &Tensor,
    weights: &ModelWeights,
    layer: usize,
    head: usize,
    partition: Option<&DegreePartition>,
) -> Tensor {
    let spec = weights.spec();
    let n = g.num_nodes();
    let (_, f_out) = spec.layer_dims(layer);
    let mut out = Tensor::zeros(n, f_out);
    for k in 0..n {
        let grp = group_of(partition, k);
        let w = weights.get(layer, grp, head, ParamKind::Weight);
        let row: Vec<f64> = match arch {
            Arch::Gcn => {
                let dk = (g.degree(k) + 1) as f64;
                let mut acc = vec![0.0; f_out];
                for j in g.neighbors(k).iter().copied().chain([k]) {
                    let coef = 1.0 / (dk * (g.degree(j) + 1) as f64).sqrt();
                    for (o, z) in acc.iter_mut().zip(row_times(h.row(j), w)) {
                        *o += coef * z;
                    }
                }
                acc
            }
            Arch::Gat => {
                let a = weights.get(layer, grp, head, ParamKind::Attention);
                let zk = row_times(h.row(k), w);
                let nbrs: Vec<usize> = g.neighbors(k).iter().copied().chain([k]).collect();
                let zs: Vec<Vec<f64>> = nbrs.iter().map(|&j| row_times(h.row(j), w)).collect();
                let e: Vec<f64> = zs
                    .iter()
                    .map(|zj| {
                        let s: f64 = (0..f_out).map(|i| a.get(i, 0) * zk[i] + a.get(f_out + i, 0) * zj[i]).sum();
                        if s > 0.0 {
                            s
                        } else {
                            spec.leaky_slope * s
                        }
                    })
                    .collect();
                let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let den: f64 = e.iter().map(|x| (x - max).exp()).sum();
                let mut acc = vec![0.0; f_out];
                for (zj, ej) in zs.iter().zip(&e) {
                    let alpha = (ej - max).exp() / den;
                    for (o, z) in acc.iter_mut().zip(zj) {
                        *o += alpha * z;
                    }
                }
                acc
            }
            Arch::Sage => {
                let f_in = h.cols();
                let mut cat = h.row(k).to_vec();
                let mut mean = vec![0.0; f_in];
                let nb = g.neighbors(k);
                for &u in nb {
                    for (m, x) in mean.iter_mut().zip(h.row(u)) {
                        *m += x / nb.len() as f64;
                    }
                }
                cat.extend(mean);
                (0..f_out)
                    .map(|i| cat.iter().enumerate().map(|(c, &x)| w.get(i, c) * x).sum())
                    .collect()
            }
        };
        out.row_mut(k).copy_from_slice(&row);
    }
    out
}

/// Whole model by per-node loops: ReLU between layers, hidden GAT heads
/// concatenated, output heads averaged.
pub fn naive_model(g: &CsrGraph, x: &Tensor, weights: &ModelWeights, partition: Option<&DegreePartition>) -> Tensor {
    let spec: &ModelSpec = weights.spec();
    let partition = if spec.variant.is_grouped() { partition } else { None };
    let mut h = x.clone();
    for l in 0..spec.num_layers {
        let last = l + 1 == spec.num_layers;
        let heads: Vec<Tensor> = (0..spec.heads())
            .map(|hd| naive_layer(spec.arch, g, &h, weights, l, hd, partition))
            .collect();
        let mut out = if last {
            let mut acc = Tensor::zeros(heads[0].rows(), heads[0].cols());
            for t in &heads {
                acc.add_assign(t);
            }
            if heads.len() > 1 {
                acc.data_mut().iter_mut().for_each(|v| *v /= heads.len() as f64);
            }
            acc
        } else {
            let mut acc = heads[0].clone();
            for t in &heads[1..] {
                acc = gnnstrat_core::autodiff::concat_cols(&acc, t).unwrap();
            }
            acc
        };
        if !last {
            out.data_mut().iter_mut().for_each(|v| *v = relu(*v));
        }
        h = out;
    }
    h
}

/// Between-class variance `w0 w1 (mu0 - mu1)^2` of the cut `deg <= t`, from
/// the expanded list of node degrees.
pub fn between_class_variance(degrees: &[usize], t: usize) -> f64 {
    let (low, high): (Vec<f64>, Vec<f64>) = {
        let (l, h): (Vec<usize>, Vec<usize>) = degrees.iter().partition(|&&d| d <= t);
        (l.iter().map(|&d| d as f64).collect(), h.iter().map(|&d| d as f64).collect())
    };
    let n = degrees.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let diff = mean(&low) - mean(&high);
    (low.len() as f64 / n) * (high.len() as f64 / n) * diff * diff
}

/// Roots of `det(A - x I)` by sign scan and bisection.
pub fn charpoly_roots(a: &Tensor) -> Vec<f64> {
    let n = a.rows();
    let det = |x: f64| {
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| a.get(i, j) - if i == j { x } else { 0.0 }).collect())
            .collect();
        let mut d = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            if p != c {
                m.swap(p, c);
                d = -d;
            }
            d *= m[c][c];
            if m[c][c] == 0.0 {
                return 0.0;
            }
            let pivot = m[c].clone();
            for row in m.iter_mut().skip(c + 1) {
                let f = row[c] / pivot[c];
                for (x, p) in row.iter_mut().zip(&pivot).skip(c) {
                    *x -= f * p;
                }
            }
        }
        d
    };
    let bound: f64 = a.data().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let steps = 200_000;
    let mut roots = Vec::new();
    let mut prev = (-bound, det(-bound));
    for k in 1..=steps {
        let x = -bound + 2.0 * bound * k as f64 / steps as f64;
        let fx = det(x);
        if prev.1.signum() != fx.signum() {
            let (mut lo, mut hi, flo) = (prev.0, x, prev.1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if det(mid).signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = (x, fx);
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

pub fn random_symmetric(n: usize, r: &mut impl Rng) -> Tensor {
    let mut m = random_tensor(n, n, r);
    for i in 0..n {
        for j in 0..i {
            let v = m.get(i, j);
            m.set(j, i, v);
        }
    }
    m
}
