//! Eigenvalue spectra of renormalized adjacencies restricted to one degree
//! group.
//!
//! Eigenvalues come from the cyclic Jacobi method. Pairs are visited in
//! round-robin (tournament) order: each round holds `n / 2` disjoint pairs
//! whose rotations commute, so a round is applied as one sweep over rows for
//! the column rotations followed by one sweep over row pairs. Every pair
//! `(p, q)` is visited exactly once per sweep, as in the row-cyclic order,
//! while memory access stays sequential.
//!
//! Spectra of block-diagonal matrices are the union of the block spectra, so
//! the solver runs once per connected component of the group's subgraph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::sparse::CsrMatrix;
use crate::stratify::DegreePartition;
use crate::tensor::Tensor;

/// Convergence: every off-diagonal magnitude below this.
pub const JACOBI_TOL: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DEFAULT_DENSE_LIMIT: usize = 5000;
pub const DENSE_LIMIT_ENV: &str = "GNNSTRAT_DENSE_EIG_LIMIT";

/// Rotations are skipped for entries this far below the tolerance.
const SKIP_BELOW: f64 = JACOBI_TOL * 1e-3;

/// All eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    jacobi_eigenvalues(m, JACOBI_TOL, JACOBI_MAX_SWEEPS)
}

pub fn jacobi_eigenvalues(m: &Tensor, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = m.rows();
    if n == 0 || m.cols() != n {
        return Err(Error::InvalidArgument(format!(
            "eigenvalues need a nonempty square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    for r in 0..n {
        for c in r + 1..n {
            let diff = (m.get(r, c) - m.get(c, r)).abs();
            if diff > SYMMETRY_TOL || diff.is_nan() {
                return Err(Error::NotSymmetric { row: r, col: c, diff });
            }
        }
    }
    let mut a = m.data().to_vec();
    let pairs = round_robin(n);
    let mut rotations = Vec::with_capacity(n / 2);
    let mut sweeps = 0;
    loop {
        let residual = max_off_diagonal(&a, n);
        if residual < tol {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        for round in &pairs {
            rotations.clear();
            for &(p, q) in round {
                if let Some((c, s)) = rotation(&a, n, p, q) {
                    rotations.push((p, q, c, s));
                }
            }
            if !rotations.is_empty() {
                apply_round(&mut a, n, &rotations);
            }
        }
        sweeps += 1;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Disjoint pairs for each of the `m - 1` rounds, `m` being `n` rounded up
/// to even; every unordered pair appears in exactly one round.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let m = n + n % 2;
    let mut players: Vec<usize> = (0..m).collect();
    let mut rounds = Vec::with_capacity(m.saturating_sub(1));
    for _ in 0..m.saturating_sub(1) {
        let round = (0..m / 2)
            .map(|i| (players[i], players[m - 1 - i]))
            .filter(|&(p, q)| p < n && q < n)
            .map(|(p, q)| (p.min(q), p.max(q)))
            .collect();
        rounds.push(round);
        players[1..].rotate_right(1);
    }
    rounds
}

fn max_off_diagonal(a: &[f64], n: usize) -> f64 {
    let mut max = 0.0f64;
    for r in 0..n {
        for (c, &v) in a[r * n..(r + 1) * n].iter().enumerate() {
            if c != r {
                max = max.max(v.abs());
            }
        }
    }
    max
}

/// `(c, s)` annihilating `a[p, q]`, or `None` if it is already negligible.
fn rotation(a: &[f64], n: usize, p: usize, q: usize) -> Option<(f64, f64)> {
    let apq = a[p * n + q];
    if apq.abs() < SKIP_BELOW {
        return None;
    }
    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    Some((c, t * c))
}

/// `A <- J^T A J` for the product `J` of disjoint rotations.
fn apply_round(a: &mut [f64], n: usize, rot: &[(usize, usize, f64, f64)]) {
    let columns = |row: &mut [f64]| {
        for &(p, q, c, s) in rot {
            let (x, y) = (row[p], row[q]);
            row[p] = c * x - s * y;
            row[q] = s * x + c * y;
        }
    };
    #[cfg(feature = "parallel")]
    if n >= 256 {
        use rayon::prelude::*;
        a.par_chunks_mut(n).for_each(columns);
    } else {
        a.chunks_mut(n).for_each(columns);
    }
    #[cfg(not(feature = "parallel"))]
    a.chunks_mut(n).for_each(columns);

    for &(p, q, c, s) in rot {
        let (head, tail) = a.split_at_mut(q * n);
        let rp = &mut head[p * n..(p + 1) * n];
        let rq = &mut tail[..n];
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let (u, v) = (*x, *y);
            *x = c * u - s * v;
            *y = s * u + c * v;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    High,
    Full,
}

/// Which degrees normalise the group's adjacency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Renormalize the induced subgraph with degrees recomputed inside it.
    #[default]
    Subgraph,
    /// Restrict the whole graph's renormalized adjacency to the group.
    Full,
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Group::Low),
            "high" => Ok(Group::High),
            "full" => Ok(Group::Full),
            _ => Err(Error::InvalidArgument(format!("unknown group {s:?} (expected low, high or full)"))),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Low => "low",
            Group::High => "high",
            Group::Full => "full",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subgraph" => Ok(Normalization::Subgraph),
            "full" => Ok(Normalization::Full),
            _ => Err(Error::InvalidArgument(format!(
                "unknown normalization {s:?} (expected subgraph or full)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Subgraph => "subgraph",
            Normalization::Full => "full",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub group: Group,
    pub theta: Option<usize>,
    pub normalization: Normalization,
    /// Connected components of the group's subgraph.
    pub components: usize,
}

/// Companion record of a spectrum CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub group: Group,
    pub n: usize,
    pub theta: Option<usize>,
    pub normalization: Normalization,
    pub components: usize,
    /// Population standard deviation of `|lambda|`.
    pub dispersion: f64,
    pub min: f64,
    pub max: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dispersion(&self) -> f64 {
        abs_dispersion(&self.eigenvalues)
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            group: self.group,
            n: self.len(),
            theta: self.theta,
            normalization: self.normalization,
            components: self.components,
            dispersion: self.dispersion(),
            min: self.eigenvalues.last().copied().unwrap_or(f64::NAN),
            max: self.eigenvalues.first().copied().unwrap_or(f64::NAN),
        }
    }

    /// `index,eigenvalue` rows, eigenvalues in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Population standard deviation of the magnitudes.
pub fn abs_dispersion(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    (values.iter().map(|v| (v.abs() - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Dense eigensolver size cap: `GNNSTRAT_DENSE_EIG_LIMIT` if set and valid.
pub fn dense_limit_from_env() -> Result<usize> {
    match std::env::var(DENSE_LIMIT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{DENSE_LIMIT_ENV} must be a node count, got {v:?}"))),
        Err(_) => Ok(DEFAULT_DENSE_LIMIT),
    }
}

/// Spectrum of the renormalized adjacency on one group's nodes.
pub fn partition_spectrum(
    graph: &CsrGraph,
    partition: Option<&DegreePartition>,
    group: Group,
    normalization: Normalization,
    dense_limit: usize,
) -> Result<Spectrum> {
    let nodes: Vec<usize> = match (group, partition) {
        (Group::Full, _) => (0..graph.num_nodes()).collect(),
        (_, None) => {
            return Err(Error::InvalidArgument(format!("the {group} group needs a degree partition")));
        }
        (Group::Low, Some(p)) => p.low_nodes(),
        (Group::High, Some(p)) => p.high_nodes(),
    };
    if nodes.is_empty() {
        return Err(Error::EmptyGroup(match group {
            Group::Low => "low",
            Group::High => "high",
            Group::Full => "full",
        }));
    }
    if nodes.len() > dense_limit {
        return Err(Error::DenseLimit {
            nodes: nodes.len(),
            limit: dense_limit,
        });
    }
    let sub = graph.induced_subgraph(&nodes)?;
    let matrix = match normalization {
        Normalization::Subgraph => sub.graph.renormalized_adjacency(),
        Normalization::Full => restrict(&graph.renormalized_adjacency(), &sub.new_to_old, &sub.old_to_new),
    };
    let components = sub.graph.connected_components();
    let mut eigenvalues = Vec::with_capacity(nodes.len());
    for comp in &components {
        eigenvalues.extend(symmetric_eigenvalues(&dense_block(&matrix, comp))?);
    }
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(Spectrum {
        eigenvalues,
        group,
        theta: partition.and_then(|p| p.theta()),
        normalization,
        components: components.len(),
    })
}

/// Principal submatrix on `keep` (ascending), relabelled.
fn restrict(m: &CsrMatrix, keep: &[usize], old_to_new: &[Option<usize>]) -> CsrMatrix {
    let (mut row_ptr, mut col_idx, mut values) = (vec![0], Vec::new(), Vec::new());
    for &old in keep {
        let (cols, vals) = m.row(old);
        for (&c, &v) in cols.iter().zip(vals) {
            if let Some(nc) = old_to_new[c] {
                col_idx.push(nc);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::new(keep.len(), keep.len(), row_ptr, col_idx, values).expect("monotone relabelling keeps rows sorted")
}

/// Dense `m[rows, rows]` for an ascending node list.
fn dense_block(m: &CsrMatrix, rows: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(rows.len(), rows.len());
    for (i, &r) in rows.iter().enumerate() {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if let Ok(j) = rows.binary_search(&c) {
                out.set(i, j, v);
            }
        }
    }
    out
}
