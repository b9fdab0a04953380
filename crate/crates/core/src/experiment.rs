//! Multi-seed experiments, threshold sweeps and their CSV exports.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{Arch, GraphContext, Variant};
use crate::stratify::{partition_by_degree, ThetaMode};
use crate::train::{train_with_context, RunResult, TrainConfig};

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Template for every run; `variant` and `seed` are overridden.
    pub base: TrainConfig,
    pub variants: Vec<Variant>,
    pub runs: usize,
    pub base_seed: u64,
    /// Runs executed concurrently. Results do not depend on this.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(base: TrainConfig) -> Self {
        Self {
            base,
            variants: Variant::ALL.to_vec(),
            runs: 10,
            base_seed: 0,
            workers: 1,
        }
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    /// Means of the per-group test accuracies over runs that report them.
    pub low_mean: Option<f64>,
    pub high_mean: Option<f64>,
    /// Per-run results in seed order.
    pub results: Vec<RunResult>,
}

impl VariantSummary {
    fn from_results(variant: Variant, results: Vec<RunResult>) -> Self {
        let acc: Vec<f64> = results.iter().map(|r| r.test_acc).collect();
        let (mean, std) = mean_std(&acc);
        let group_mean = |f: fn(&RunResult) -> Option<f64>| {
            let v: Option<Vec<f64>> = results.iter().map(f).collect();
            v.map(|v| mean_std(&v).0)
        };
        Self {
            variant,
            runs: results.len(),
            mean,
            std,
            low_mean: group_mean(|r| r.low_acc),
            high_mean: group_mean(|r| r.high_acc),
            results,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub arch: Arch,
    pub variants: Vec<VariantSummary>,
}

impl ExperimentSummary {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    /// `dataset,arch,variant,runs,mean,std`, one row per variant.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "arch", "variant", "runs", "mean", "std"])?;
        for s in &self.variants {
            w.write_record([
                self.dataset.clone(),
                self.arch.to_string(),
                s.variant.to_string(),
                s.runs.to_string(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `f` for every item on `workers` threads, keeping input order.
fn map_runs<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
        return Ok(pool.install(|| items.par_iter().map(&f).collect()));
    }
    let _ = workers;
    Ok(items.iter().map(f).collect())
}

pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentSummary> {
    let ctx = GraphContext::new(&dataset.graph, &dataset.features)?;
    run_experiment_with_context(config, dataset, &ctx)
}

/// Seeds `base_seed .. base_seed + runs` for each variant. The first failing
/// run, in variant then seed order, aborts the experiment.
pub fn run_experiment_with_context(
    config: &ExperimentConfig,
    dataset: &Dataset,
    ctx: &GraphContext,
) -> Result<ExperimentSummary> {
    if config.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if config.variants.is_empty() {
        return Err(Error::InvalidArgument("no variants requested".into()));
    }
    let jobs: Vec<(Variant, u64)> = config
        .variants
        .iter()
        .flat_map(|&v| (0..config.runs as u64).map(move |i| (v, config.base_seed + i)))
        .collect();
    let outcomes = map_runs(&jobs, config.workers, |&(variant, seed)| {
        let run = TrainConfig {
            variant,
            seed,
            ..config.base.clone()
        };
        train_with_context(&run, dataset, ctx)
            .map(|o| o.result)
            .map_err(|e| Error::Run {
                seed,
                source: Box::new(e),
            })
    })?;
    let mut outcomes = outcomes.into_iter();
    let mut variants = Vec::with_capacity(config.variants.len());
    for &v in &config.variants {
        let mut results: Vec<RunResult> = outcomes.by_ref().take(config.runs).collect::<Result<_>>()?;
        results.sort_by_key(|r| r.seed);
        variants.push(VariantSummary::from_results(v, results));
    }
    Ok(ExperimentSummary {
        dataset: dataset.name.clone(),
        arch: config.base.arch,
        variants,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepStatus {
    Ok,
    /// The threshold leaves one group empty.
    Skipped,
    Baseline,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    /// `None` on the baseline reference row.
    pub theta: Option<usize>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub status: SweepStatus,
}

/// Stratified accuracy at each threshold, preceded by a baseline row.
pub fn theta_sweep(config: &ExperimentConfig, dataset: &Dataset, thetas: &[usize]) -> Result<Vec<SweepRow>> {
    let ctx = GraphContext::new(&dataset.graph, &dataset.features)?;
    let deg = dataset.graph.degrees();
    let mut rows = Vec::with_capacity(thetas.len() + 1);
    let baseline = ExperimentConfig {
        variants: vec![Variant::Baseline],
        ..config.clone()
    };
    let s = run_experiment_with_context(&baseline, dataset, &ctx)?;
    rows.push(SweepRow {
        theta: None,
        mean: Some(s.variants[0].mean),
        std: Some(s.variants[0].std),
        status: SweepStatus::Baseline,
    });
    for &theta in thetas {
        if partition_by_degree(&deg, theta).is_err() {
            rows.push(SweepRow {
                theta: Some(theta),
                mean: None,
                std: None,
                status: SweepStatus::Skipped,
            });
            continue;
        }
        let mut at = ExperimentConfig {
            variants: vec![Variant::Stratified],
            ..config.clone()
        };
        at.base.theta = ThetaMode::Fixed(theta);
        let s = run_experiment_with_context(&at, dataset, &ctx)?;
        rows.push(SweepRow {
            theta: Some(theta),
            mean: Some(s.variants[0].mean),
            std: Some(s.variants[0].std),
            status: SweepStatus::Ok,
        });
    }
    Ok(rows)
}

/// `theta,mean,std,status`; the baseline row has theta `baseline`, skipped
/// rows leave mean and std empty.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "mean", "std", "status"])?;
    let num = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        let theta = r.theta.map_or_else(|| "baseline".to_string(), |t| t.to_string());
        let status = match r.status {
            SweepStatus::Ok => "ok",
            SweepStatus::Skipped => "skipped",
            SweepStatus::Baseline => "baseline",
        };
        w.write_record([theta, num(r.mean), num(r.std), status.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
