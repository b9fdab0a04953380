//! Full-batch training with best-validation model selection, and accuracy
//! metrics overall and per degree group.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Tape, Var, DEFAULT_LEAKY_SLOPE};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{forward_on_tape, Arch, GraphContext, ModelSpec, ModelWeights, Variant};
use crate::stratify::{partition_by_degree, random_partition, DegreePartition, OtsuScale, ThetaMode};
use crate::tensor::Tensor;

/// Mixed into the run seed to draw random partitions from a stream
/// independent of weight initialisation.
const PARTITION_SEED_SALT: u64 = 0x7061_7274_6974_696f;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub variant: Variant,
    pub theta: ThetaMode,
    pub seed: u64,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub gat_heads: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    /// Fill `wall_time_s` in the result. Off by default so identical
    /// configurations give identical metrics.
    pub record_wall_time: bool,
}

impl TrainConfig {
    pub fn new(arch: Arch, variant: Variant) -> Self {
        Self {
            arch,
            variant,
            theta: ThetaMode::Auto(OtsuScale::Linear),
            seed: 0,
            epochs: 200,
            hidden_dim: 32,
            gat_heads: 1,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            adam: AdamConfig::default(),
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }

    pub fn model_spec(&self, dataset: &Dataset) -> ModelSpec {
        ModelSpec {
            hidden_dim: self.hidden_dim,
            gat_heads: self.gat_heads,
            leaky_slope: self.leaky_slope,
            ..ModelSpec::new(self.arch, self.variant, dataset.num_features(), dataset.num_classes)
        }
    }
}

/// One run's metrics; serialises to the per-run metrics JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub arch: Arch,
    pub variant: Variant,
    /// Degree threshold: the split point for stratified runs, the size
    /// reference for random runs, and the group definition for metrics.
    pub theta: Option<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    /// Test accuracy over low-degree nodes; absent when that group has no
    /// test nodes or the threshold does not split the graph.
    pub low_acc: Option<f64>,
    pub high_acc: Option<f64>,
    /// 1-based epoch whose parameters were kept.
    pub epoch_of_best: usize,
    pub wall_time_s: Option<f64>,
}

/// Everything `train` produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub weights: ModelWeights,
    pub result: RunResult,
    /// Partition the model was trained with, if grouped.
    pub model_partition: Option<DegreePartition>,
    /// Training loss before each optimizer step.
    pub train_loss: Vec<f64>,
    /// Validation accuracy after each epoch.
    pub val_acc: Vec<f64>,
}

/// The partitions used by one run.
#[derive(Clone, Debug)]
pub struct RunPartitions {
    pub theta: Option<usize>,
    /// Degree partition at `theta`, used for group metrics.
    pub degree: Option<DegreePartition>,
    /// Partition threaded through the model layers.
    pub model: Option<DegreePartition>,
}

pub fn resolve_partitions(config: &TrainConfig, dataset: &Dataset) -> Result<RunPartitions> {
    let deg = dataset.graph.degrees();
    if config.variant == Variant::Baseline {
        let theta = config.theta.resolve(&deg).ok();
        let degree = theta.and_then(|t| partition_by_degree(&deg, t).ok());
        return Ok(RunPartitions {
            theta,
            degree,
            model: None,
        });
    }
    let theta = config.theta.resolve(&deg)?;
    let degree = partition_by_degree(&deg, theta)?;
    let model = match config.variant {
        Variant::Random => random_partition(
            dataset.num_nodes(),
            degree.low_count(),
            config.seed ^ PARTITION_SEED_SALT,
        )?,
        _ => degree.clone(),
    };
    Ok(RunPartitions {
        theta: Some(theta),
        degree: Some(degree),
        model: Some(model),
    })
}

/// Fraction of `mask` nodes whose argmax logit equals the label.
pub fn evaluate_accuracy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let correct = mask
        .iter()
        .filter(|&&v| logits.argmax_row(v) == labels[v])
        .count();
    Ok(correct as f64 / mask.len() as f64)
}

/// Accuracy over `test` restricted to each group of `partition`.
pub fn group_accuracy(
    logits: &Tensor,
    labels: &[usize],
    test: &[usize],
    partition: &DegreePartition,
) -> Result<(f64, f64)> {
    let (low, high): (Vec<usize>, Vec<usize>) = test.iter().partition(|&&v| partition.is_low(v));
    if low.is_empty() {
        return Err(Error::EmptyGroupIntersection("low"));
    }
    if high.is_empty() {
        return Err(Error::EmptyGroupIntersection("high"));
    }
    Ok((
        evaluate_accuracy(logits, labels, &low)?,
        evaluate_accuracy(logits, labels, &high)?,
    ))
}

pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let ctx = GraphContext::new(&dataset.graph, &dataset.features)?;
    train_with_context(config, dataset, &ctx)
}

/// As [`train`], reusing graph operators prepared for `dataset`.
pub fn train_with_context(config: &TrainConfig, dataset: &Dataset, ctx: &GraphContext) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let parts = resolve_partitions(config, dataset)?;
    let spec = config.model_spec(dataset);
    let mut weights = ModelWeights::init(&spec, config.seed)?;
    let names = weights.names();
    let mut adam = Adam::new(config.adam, weights.params());
    let labels: Arc<[usize]> = dataset.labels.as_slice().into();
    let train_mask: Arc<[usize]> = dataset.split.train.as_slice().into();

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_acc = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelWeights, Tensor)> = None;

    // Pass `e` computes the logits of the parameters after `e` updates, so
    // they serve both the previous epoch's evaluation and this step's loss.
    for epoch in 0..=config.epochs {
        let mut tape = Tape::new();
        let vars: Vec<Var> = weights.params().iter().map(|p| tape.param(p.clone())).collect();
        let logits = forward_on_tape(&mut tape, &spec, &vars, ctx, parts.model.as_ref())?;
        if epoch > 0 {
            let values = tape.value(logits)?;
            let acc = evaluate_accuracy(values, &dataset.labels, &dataset.split.val)?;
            val_acc.push(acc);
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, epoch, weights.clone(), values.clone()));
            }
        }
        if epoch == config.epochs {
            break;
        }
        let loss = tape.cross_entropy(logits, &labels, &train_mask)?;
        let loss_value = tape.value(loss)?.item();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                seed: config.seed,
            });
        }
        train_loss.push(loss_value);
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = vars.iter().map(|&v| grads.take(v)).collect::<Result<_>>()?;
        adam.step(&names, weights.params_mut(), &grads)?;
    }

    let (best_val_acc, epoch_of_best, best_weights, logits) = best.expect("epochs >= 1");
    let test_acc = evaluate_accuracy(&logits, &dataset.labels, &dataset.split.test)?;
    let (low_acc, high_acc) = match &parts.degree {
        Some(p) => match group_accuracy(&logits, &dataset.labels, &dataset.split.test, p) {
            Ok((l, h)) => (Some(l), Some(h)),
            Err(Error::EmptyGroupIntersection(_)) => (None, None),
            Err(e) => return Err(e),
        },
        None => (None, None),
    };
    let result = RunResult {
        dataset: dataset.name.clone(),
        arch: config.arch,
        variant: config.variant,
        theta: parts.theta,
        seed: config.seed,
        epochs: config.epochs,
        best_val_acc,
        test_acc,
        low_acc,
        high_acc,
        epoch_of_best,
        wall_time_s: config.record_wall_time.then(|| start.elapsed().as_secs_f64()),
    };
    Ok(TrainOutcome {
        weights: best_weights,
        result,
        model_partition: parts.model,
        train_loss,
        val_acc,
    })
}
