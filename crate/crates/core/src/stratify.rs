//! Splitting nodes into low- and high-degree groups.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DegreeVector;

/// Node counts per integer degree `0..=max_degree`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeHistogram {
    counts: Vec<usize>,
}

impl DegreeHistogram {
    pub fn from_degrees(deg: &DegreeVector) -> Self {
        let mut counts = vec![0usize; deg.max() + 1];
        for &d in deg.as_slice() {
            counts[d] += 1;
        }
        Self { counts }
    }

    /// Builds a histogram from explicit bin counts; bin `i` is degree `i`.
    pub fn from_counts(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn max_degree(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// `degree,count` rows for every bin up to the maximum degree.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["degree", "count"])?;
        for (d, &c) in self.counts.iter().enumerate().take(self.max_degree() + 1) {
            w.write_record([d.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Value scale on which Otsu's between-class variance is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtsuScale {
    /// Raw integer degrees.
    #[default]
    Linear,
    /// `ln(max(degree, 1))`, which suits heavy-tailed degree distributions.
    Log,
}

/// Otsu's threshold: the cut `low = {deg <= t}` maximising
/// `w0 * w1 * (mu0 - mu1)^2`, smallest `t` on ties.
pub fn otsu_threshold(hist: &DegreeHistogram, scale: OtsuScale) -> Result<usize> {
    if hist.nonempty_bins() < 2 {
        return Err(Error::DegenerateDistribution);
    }
    match scale {
        OtsuScale::Linear => Ok(otsu_linear(hist.counts())),
        OtsuScale::Log => {
            let values: Vec<f64> = (0..hist.counts().len()).map(|d| (d.max(1) as f64).ln()).collect();
            Ok(otsu_weighted(hist.counts(), &values))
        }
    }
}

fn cut_range(counts: &[usize]) -> std::ops::Range<usize> {
    let lo = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let hi = counts.iter().rposition(|&c| c > 0).unwrap_or(0);
    lo..hi
}

/// Exact integer comparison of `(S0*n1 - S1*n0)^2 / (n0*n1)`, which is
/// the between-class variance scaled by `N^2`.
fn otsu_linear(counts: &[usize]) -> usize {
    let total_n: u128 = counts.iter().map(|&c| c as u128).sum();
    let total_s: u128 = counts.iter().enumerate().map(|(d, &c)| (d * c) as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best: Option<(usize, u128, u128)> = None;
    let range = cut_range(counts);
    for (d, &c) in counts.iter().enumerate().take(range.end) {
        n0 += c as u128;
        s0 += (d * c) as u128;
        if d < range.start {
            continue;
        }
        let (n1, s1) = (total_n - n0, total_s - s0);
        let a = (s1 * n0).abs_diff(s0 * n1);
        let (num, den) = (a * a, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => match (num.checked_mul(bden), bnum.checked_mul(den)) {
                (Some(l), Some(r)) => l > r,
                _ => num as f64 / den as f64 > bnum as f64 / bden as f64,
            },
        };
        if better {
            best = Some((d, num, den));
        }
    }
    best.map(|(d, _, _)| d).unwrap_or(range.start)
}

fn otsu_weighted(counts: &[usize], values: &[f64]) -> usize {
    let total_n: f64 = counts.iter().map(|&c| c as f64).sum();
    let total_s: f64 = counts.iter().zip(values).map(|(&c, &x)| c as f64 * x).sum();
    let (mut n0, mut s0) = (0.0, 0.0);
    let mut best = (0usize, f64::NEG_INFINITY);
    let range = cut_range(counts);
    for d in 0..range.end {
        n0 += counts[d] as f64;
        s0 += counts[d] as f64 * values[d];
        if d < range.start {
            continue;
        }
        let n1 = total_n - n0;
        let w0 = n0 / total_n;
        let w1 = n1 / total_n;
        let diff = s0 / n0 - (total_s - s0) / n1;
        let score = w0 * w1 * diff * diff;
        if score > best.1 {
            best = (d, score);
        }
    }
    best.0
}

/// How the threshold is chosen for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaMode {
    Auto(OtsuScale),
    Fixed(usize),
}

impl ThetaMode {
    pub fn resolve(self, deg: &DegreeVector) -> Result<usize> {
        match self {
            ThetaMode::Fixed(t) => Ok(t),
            ThetaMode::Auto(scale) => otsu_threshold(&DegreeHistogram::from_degrees(deg), scale),
        }
    }
}

impl FromStr for ThetaMode {
    type Err = Error;

    /// Accepts `auto`, `auto-log` or a non-negative integer.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ThetaMode::Auto(OtsuScale::Linear)),
            "auto-log" => Ok(ThetaMode::Auto(OtsuScale::Log)),
            _ => s
                .parse()
                .map(ThetaMode::Fixed)
                .map_err(|_| Error::InvalidArgument(format!("theta must be auto, auto-log or an integer, got {s:?}"))),
        }
    }
}

impl fmt::Display for ThetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaMode::Auto(OtsuScale::Linear) => f.write_str("auto"),
            ThetaMode::Auto(OtsuScale::Log) => f.write_str("auto-log"),
            ThetaMode::Fixed(t) => write!(f, "{t}"),
        }
    }
}

/// Low/high node groups. `theta` is `None` for random partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreePartition {
    theta: Option<usize>,
    low_mask: Arc<[bool]>,
    high_mask: Arc<[bool]>,
    low_count: usize,
}

impl DegreePartition {
    /// Builds a partition from a low mask; both groups must be nonempty.
    pub fn from_low_mask(low_mask: Vec<bool>, theta: Option<usize>) -> Result<Self> {
        let p = Self::from_low_mask_unchecked(low_mask, theta);
        if p.low_count == 0 {
            return Err(Error::EmptyGroup("low"));
        }
        if p.high_count() == 0 {
            return Err(Error::EmptyGroup("high"));
        }
        Ok(p)
    }

    /// Like [`from_low_mask`](Self::from_low_mask) but allows an empty group.
    pub fn from_low_mask_unchecked(low_mask: Vec<bool>, theta: Option<usize>) -> Self {
        let low_count = low_mask.iter().filter(|&&b| b).count();
        let high_mask: Arc<[bool]> = low_mask.iter().map(|&b| !b).collect();
        Self {
            theta,
            low_mask: low_mask.into(),
            high_mask,
            low_count,
        }
    }

    pub fn theta(&self) -> Option<usize> {
        self.theta
    }

    pub fn low_mask(&self) -> &Arc<[bool]> {
        &self.low_mask
    }

    pub fn high_mask(&self) -> &Arc<[bool]> {
        &self.high_mask
    }

    pub fn len(&self) -> usize {
        self.low_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low_mask.is_empty()
    }

    pub fn low_count(&self) -> usize {
        self.low_count
    }

    pub fn high_count(&self) -> usize {
        self.len() - self.low_count
    }

    pub fn is_low(&self, v: usize) -> bool {
        self.low_mask[v]
    }

    pub fn low_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.low_mask[v]).collect()
    }

    pub fn high_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| !self.low_mask[v]).collect()
    }

    /// Same groups with node `v` moved to position `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut mask = vec![false; self.len()];
        for (v, &p) in perm.iter().enumerate() {
            mask[p] = self.low_mask[v];
        }
        Self::from_low_mask_unchecked(mask, self.theta)
    }
}

/// `low = {v : deg[v] <= theta}`.
pub fn partition_by_degree(deg: &DegreeVector, theta: usize) -> Result<DegreePartition> {
    let mask = deg.as_slice().iter().map(|&d| d <= theta).collect();
    DegreePartition::from_low_mask(mask, Some(theta))
}

/// A uniformly random set of `low_count` nodes marked low.
pub fn random_partition(n: usize, low_count: usize, seed: u64) -> Result<DegreePartition> {
    if low_count == 0 || low_count >= n {
        return Err(Error::InvalidArgument(format!(
            "random partition needs 0 < low_count < n, got low_count {low_count} for n {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for v in rand::seq::index::sample(&mut rng, n, low_count) {
        mask[v] = true;
    }
    DegreePartition::from_low_mask(mask, None)
}
