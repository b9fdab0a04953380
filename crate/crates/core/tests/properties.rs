mod common;

use common::*;
use gnnstrat_core::models::{attention_coefficients, model_forward, Arch, GraphContext, ModelSpec, ModelWeights, ParamKind, Variant};
use gnnstrat_core::spectral::{partition_spectrum, Group, Normalization, DEFAULT_DENSE_LIMIT};
use gnnstrat_core::train::{evaluate_accuracy, group_accuracy};
use gnnstrat_core::{
    otsu_threshold, partition_by_degree, random_partition, CsrGraph, DegreeHistogram, DegreeVector, OtsuScale, Tensor,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn edge_list(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..max_n).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

fn graph_seed(max_n: usize) -> impl Strategy<Value = (CsrGraph, u64)> {
    (edge_list(max_n), any::<u64>()).prop_map(|((n, e), s)| (CsrGraph::from_edges_lenient(n, &e).unwrap(), s))
}

fn random_perm(n: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// Relabels node `v` as `perm[v]`.
fn permute_graph(g: &CsrGraph, perm: &[usize]) -> CsrGraph {
    let edges: Vec<(usize, usize)> = g.edges().map(|(u, v)| (perm[u], perm[v])).collect();
    CsrGraph::from_edges(g.num_nodes(), &edges).unwrap()
}

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for (v, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(x.row(v));
    }
    out
}

fn small_spec(arch: Arch, variant: Variant, f: usize, heads: usize) -> ModelSpec {
    let mut spec = ModelSpec::new(arch, variant, f, 3);
    spec.hidden_dim = 4;
    spec.gat_heads = heads;
    spec
}

fn arch_strategy() -> impl Strategy<Value = Arch> {
    prop::sample::select(Arch::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_is_valid_and_degrees_sum_to_twice_edges((n, edges) in edge_list(40)) {
        let g = CsrGraph::from_edges_lenient(n, &edges).unwrap();
        prop_assert!(g.validate().is_ok());
        prop_assert_eq!(g.degrees().total(), 2 * g.num_edges());
        for v in 0..n {
            prop_assert!(g.neighbors(v).windows(2).all(|w| w[0] < w[1]));
            for &u in g.neighbors(v) {
                prop_assert!(g.has_edge(u, v));
            }
        }
    }

    #[test]
    fn renormalized_entries_are_in_unit_interval((g, _) in graph_seed(40)) {
        let a = g.renormalized_adjacency();
        prop_assert!(a.values().iter().all(|&x| x > 0.0 && x <= 1.0));
        for v in 0..g.num_nodes() {
            prop_assert_eq!(a.get(v, v), 1.0 / (g.degree(v) + 1) as f64);
        }
        prop_assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn group_spectra_lie_in_unit_interval((g, s) in graph_seed(30), full in any::<bool>()) {
        let part = random_mask_partition(g.num_nodes(), &mut rng(s));
        let norm = if full { Normalization::Full } else { Normalization::Subgraph };
        for group in [Group::Low, Group::High, Group::Full] {
            let sp = partition_spectrum(&g, Some(&part), group, norm, DEFAULT_DENSE_LIMIT).unwrap();
            prop_assert!(sp.eigenvalues.iter().all(|&l| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&l)));
        }
    }

    #[test]
    fn degree_mask_matches_threshold((g, _) in graph_seed(40), theta in 0usize..8) {
        let deg = g.degrees();
        match partition_by_degree(&deg, theta) {
            Ok(p) => {
                for v in 0..g.num_nodes() {
                    prop_assert_eq!(p.is_low(v), deg[v] <= theta);
                    prop_assert_eq!(p.high_mask()[v], !p.is_low(v));
                }
                prop_assert_eq!(p.low_count() + p.high_count(), g.num_nodes());
            }
            Err(_) => {
                let lows = deg.as_slice().iter().filter(|&&d| d <= theta).count();
                prop_assert!(lows == 0 || lows == g.num_nodes());
            }
        }
    }

    #[test]
    fn random_partition_has_requested_size(n in 2usize..500, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let low = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let p = random_partition(n, low, seed).unwrap();
        prop_assert_eq!(p.low_count(), low);
        prop_assert_eq!(p.low_nodes().len(), low);
        prop_assert_eq!(p, random_partition(n, low, seed).unwrap());
    }

    #[test]
    fn otsu_ignores_node_order(degs in prop::collection::vec(0usize..40, 2..200), seed in any::<u64>()) {
        let mut shuffled = degs.clone();
        shuffled.shuffle(&mut rng(seed));
        let a = DegreeHistogram::from_degrees(&DegreeVector::new(degs));
        let b = DegreeHistogram::from_degrees(&DegreeVector::new(shuffled));
        for scale in [OtsuScale::Linear, OtsuScale::Log] {
            match (otsu_threshold(&a, scale), otsu_threshold(&b, scale)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }

    #[test]
    fn tied_groups_reproduce_the_baseline((g, s) in graph_seed(25), arch in arch_strategy(), heads in 1usize..3) {
        let mut r = rng(s);
        let n = g.num_nodes();
        let x = random_sparse_tensor(n, 6, 0.5, &mut r);
        let ctx = GraphContext::new(&g, &x).unwrap();
        let part = random_mask_partition(n, &mut r);
        let mut w = ModelWeights::init(&small_spec(arch, Variant::Stratified, 6, heads), s).unwrap();
        w.tie_groups();
        let strat = model_forward(&w, &ctx, Some(&part)).unwrap();
        let base = model_forward(&w.low_group_as_baseline(), &ctx, None).unwrap();
        prop_assert_eq!(strat, base);
    }

    #[test]
    fn one_layer_outputs_depend_only_on_own_group((g, s) in graph_seed(25), arch in arch_strategy()) {
        let mut r = rng(s);
        let n = g.num_nodes();
        let x = random_sparse_tensor(n, 6, 0.5, &mut r);
        let ctx = GraphContext::new(&g, &x).unwrap();
        let part = random_mask_partition(n, &mut r);
        let mut spec = small_spec(arch, Variant::Stratified, 6, 1);
        spec.num_layers = 1;
        let w = ModelWeights::init(&spec, s).unwrap();
        let before = model_forward(&w, &ctx, Some(&part)).unwrap();
        for group in 0..2 {
            let mut w2 = w.clone();
            let p = w2.get_mut(0, group, 0, ParamKind::Weight);
            *p = random_tensor(p.rows(), p.cols(), &mut r);
            let after = model_forward(&w2, &ctx, Some(&part)).unwrap();
            for v in 0..n {
                let untouched = part.is_low(v) != (group == 0);
                if untouched {
                    prop_assert_eq!(before.row(v), after.row(v));
                }
            }
        }
    }

    #[test]
    fn models_are_permutation_equivariant(
        (g, s) in graph_seed(25),
        arch in arch_strategy(),
        variant in prop::sample::select(Variant::ALL.to_vec()),
    ) {
        let mut r = rng(s);
        let n = g.num_nodes();
        let x = random_sparse_tensor(n, 6, 0.5, &mut r);
        let part = random_mask_partition(n, &mut r);
        let perm = random_perm(n, &mut r);
        let w = ModelWeights::init(&small_spec(arch, variant, 6, 2), s).unwrap();
        let out = model_forward(&w, &GraphContext::new(&g, &x).unwrap(), Some(&part)).unwrap();
        let pg = permute_graph(&g, &perm);
        let px = permute_rows(&x, &perm);
        let pout = model_forward(&w, &GraphContext::new(&pg, &px).unwrap(), Some(&part.permuted(&perm))).unwrap();
        prop_assert!(pout.max_abs_diff(&permute_rows(&out, &perm)) <= 1e-10);
    }

    #[test]
    fn attention_rows_sum_to_one((g, s) in graph_seed(30), grouped in any::<bool>()) {
        let mut r = rng(s);
        let n = g.num_nodes();
        let x = random_sparse_tensor(n, 5, 0.5, &mut r);
        let ctx = GraphContext::new(&g, &x).unwrap();
        let part = random_mask_partition(n, &mut r);
        let variant = if grouped { Variant::Stratified } else { Variant::Baseline };
        let w = ModelWeights::init(&small_spec(Arch::Gat, variant, 5, 2), s).unwrap();
        let edges = g.attention_edges();
        for head in 0..2 {
            let alpha = attention_coefficients(&w, &ctx, Some(&part), head).unwrap();
            let mut sums = vec![0.0; n];
            for (&t, &a) in edges.targets().iter().zip(&alpha) {
                prop_assert!(a > 0.0);
                sums[t] += a;
            }
            prop_assert!(sums.iter().all(|&z| (z - 1.0).abs() <= 1e-12));
        }
    }

    #[test]
    fn group_accuracies_reconstruct_overall(n in 4usize..300, seed in any::<u64>()) {
        let mut r = rng(seed);
        let logits = random_tensor(n, 3, &mut r);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..3)).collect();
        let test: Vec<usize> = (0..n).collect();
        let part = random_mask_partition(n, &mut r);
        let (low, high) = group_accuracy(&logits, &labels, &test, &part).unwrap();
        let all = evaluate_accuracy(&logits, &labels, &test).unwrap();
        let weighted = (low * part.low_count() as f64 + high * part.high_count() as f64) / n as f64;
        prop_assert!((weighted - all).abs() <= 1e-12);
    }

    #[test]
    fn spectra_ignore_node_labels((g, s) in graph_seed(30), full in any::<bool>()) {
        let mut r = rng(s);
        let n = g.num_nodes();
        let part = random_mask_partition(n, &mut r);
        let perm = random_perm(n, &mut r);
        let pg = permute_graph(&g, &perm);
        let norm = if full { Normalization::Full } else { Normalization::Subgraph };
        for group in [Group::Low, Group::High] {
            let a = partition_spectrum(&g, Some(&part), group, norm, DEFAULT_DENSE_LIMIT).unwrap();
            let b = partition_spectrum(&pg, Some(&part.permuted(&perm)), group, norm, DEFAULT_DENSE_LIMIT).unwrap();
            prop_assert_eq!(a.len(), b.len());
            prop_assert_eq!(a.components, b.components);
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
