//! Synthetic datasets with heavy-tailed degree distributions, for tests and
//! harness smoke runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::tensor::Tensor;

/// Preferential-attachment graph: a triangle seed, then each new node links
/// to `m` distinct existing nodes chosen with probability proportional to
/// degree. Every node ends with degree at least `m`.
pub fn preferential_attachment(n: usize, m: usize, rng: &mut impl Rng) -> Result<CsrGraph> {
    if m == 0 || n <= m {
        return Err(Error::InvalidArgument(format!(
            "preferential attachment needs 0 < m < n, got m {m}, n {n}"
        )));
    }
    let mut edges = Vec::with_capacity(n * m);
    // Each endpoint occurrence is one ticket, so draws are degree-weighted.
    let mut tickets: Vec<usize> = Vec::with_capacity(2 * n * m);
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            tickets.extend([u, v]);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in m + 1..n {
        chosen.clear();
        while chosen.len() < m {
            let u = tickets[rng.gen_range(0..tickets.len())];
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        for &u in &chosen {
            edges.push((u, v));
            tickets.extend([u, v]);
        }
    }
    CsrGraph::from_edges(n, &edges)
}

/// Parameters of [`synthetic_dataset`].
#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub attach: usize,
    pub classes: usize,
    pub features: usize,
    /// Active features per node.
    pub words: usize,
    /// Probability that an active feature is drawn from the node's class block.
    pub signal: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 500,
            attach: 2,
            classes: 3,
            features: 60,
            words: 6,
            signal: 0.7,
            train_per_class: 20,
            val: 100,
            seed: 0,
        }
    }
}

/// Preferential-attachment graph with class-correlated binary features and a
/// planetoid-style split: `train_per_class` nodes per class, then `val`
/// nodes, then everything else as test.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.classes == 0 || cfg.features < cfg.classes || cfg.words == 0 || cfg.words > cfg.features {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs classes >= 1, features >= classes and 1 <= words <= features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph = preferential_attachment(cfg.nodes, cfg.attach, &mut rng)?;
    let n = cfg.nodes;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..cfg.classes)).collect();
    let block = cfg.features / cfg.classes;
    let mut features = Tensor::zeros(n, cfg.features);
    for (v, &label) in labels.iter().enumerate() {
        let mut placed = 0;
        while placed < cfg.words {
            let f = if rng.gen::<f64>() < cfg.signal {
                label * block + rng.gen_range(0..block)
            } else {
                rng.gen_range(0..cfg.features)
            };
            if features.get(v, f) == 0.0 {
                features.set(v, f, 1.0);
                placed += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut per_class = vec![0usize; cfg.classes];
    let mut split = Split::default();
    let mut rest = Vec::new();
    for v in order {
        if per_class[labels[v]] < cfg.train_per_class {
            per_class[labels[v]] += 1;
            split.train.push(v);
        } else {
            rest.push(v);
        }
    }
    let val = cfg.val.min(rest.len());
    split.test = rest.split_off(val);
    split.val = rest;
    for s in [&mut split.train, &mut split.val, &mut split.test] {
        s.sort_unstable();
    }
    let ds = Dataset {
        name: format!("synthetic-pa{}-{}", cfg.nodes, cfg.seed),
        graph,
        features,
        labels,
        num_classes: cfg.classes,
        split,
    };
    ds.validate()?;
    Ok(ds)
}
