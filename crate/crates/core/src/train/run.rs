use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Dataset, Task, TrainConfig};
use super::optim::Optimizer;
use super::TrainError;
use crate::data::{LabeledImageSet, TimePoint};
use crate::diffgraph::{Graph, Tensor};
use crate::gconv::{
    build_model, pretrain_model, Model, ModelInput, PretrainReport, PRETRAIN_LR, PRETRAIN_STEPS,
    PRETRAIN_TARGET,
};

/// Rows per forward pass when evaluating a whole split.
pub const EVAL_CHUNK: usize = 256;

pub const RUN_RECORD_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    Accuracy,
}

impl MetricKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Pendulum => MetricKind::Rmse,
            Task::Classify => MetricKind::Accuracy,
        }
    }

    /// Whether larger values rank first.
    pub fn higher_is_better(self) -> bool {
        self == MetricKind::Accuracy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the minibatch losses.
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub report_version: u32,
    pub config: TrainConfig,
    pub metric: MetricKind,
    pub param_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pretrain: Vec<PretrainReport>,
    /// Test metric of the freshly built model.
    pub initial_metric: f64,
    pub per_epoch: Vec<EpochRecord>,
    /// Test metric after the last epoch.
    pub final_metric: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    pub seed: u64,
}

/// Learning rate for `epoch`: constant for regression, linear decay towards
/// zero for classification.
pub fn epoch_lr(config: &TrainConfig, epoch: usize) -> f64 {
    match config.task {
        Task::Pendulum => config.lr,
        Task::Classify => config.lr * (1.0 - epoch as f64 / config.epochs as f64),
    }
}

fn times(points: &[TimePoint]) -> Vec<f64> {
    points.iter().map(|p| p.t).collect()
}

/// `sqrt(mean((pred − xy)²))` over both coordinates.
pub fn pendulum_rmse(model: &Model, points: &[TimePoint]) -> Result<f64, TrainError> {
    if points.is_empty() {
        return Err(TrainError::Config("empty evaluation split".into()));
    }
    let mut sq = 0.0;
    for chunk in points.chunks(EVAL_CHUNK) {
        let pred = model.predict(ModelInput::Times(&times(chunk)))?;
        for (p, q) in pred.iter().zip(chunk) {
            sq += (p[0] - q.xy[0]).powi(2) + (p[1] - q.xy[1]).powi(2);
        }
    }
    Ok((sq / (2 * points.len()) as f64).sqrt())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of correctly classified images.
pub fn accuracy(model: &Model, set: &LabeledImageSet) -> Result<f64, TrainError> {
    if set.is_empty() {
        return Err(TrainError::Config("empty evaluation split".into()));
    }
    let mut correct = 0usize;
    for (imgs, labels) in set.images.chunks(EVAL_CHUNK).zip(set.labels.chunks(EVAL_CHUNK)) {
        let logits = model.predict(ModelInput::Images(imgs))?;
        correct += logits
            .iter()
            .zip(labels)
            .filter(|(l, &y)| argmax(l) == y)
            .count();
    }
    Ok(correct as f64 / set.len() as f64)
}

fn evaluate(model: &Model, data: &Dataset, use_val: bool) -> Result<f64, TrainError> {
    match data {
        Dataset::Pendulum { val, test, .. } => {
            let split = if use_val { val.as_ref().unwrap_or(test) } else { test };
            pendulum_rmse(model, split)
        }
        Dataset::Images { val, test, .. } => {
            let split = if use_val { val.as_ref().unwrap_or(test) } else { test };
            accuracy(model, split)
        }
    }
}

/// Loss and gradients for one minibatch given by `idx`.
fn batch_step(model: &Model, data: &Dataset, idx: &[usize]) -> Result<(f64, Vec<Tensor>), TrainError> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, true);
    let loss = match data {
        Dataset::Pendulum { train, .. } => {
            let ts: Vec<f64> = idx.iter().map(|&i| train[i].t).collect();
            let target: Vec<f64> = idx.iter().flat_map(|&i| train[i].xy).collect();
            let out = model.forward(&mut g, &p, ModelInput::Times(&ts))?;
            let target = g.constant(Tensor::new(vec![idx.len(), 2], target)?);
            g.mse_loss(out, target)?
        }
        Dataset::Images { train, .. } => {
            let imgs: Vec<_> = idx.iter().map(|&i| train.images[i].clone()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let out = model.forward(&mut g, &p, ModelInput::Images(&imgs))?;
            g.softmax_cross_entropy(out, &labels)?
        }
    };
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    Ok((value, p.grads(&g)))
}

/// Trains a freshly built model on `data` and returns the run record with
/// the trained model.
///
/// Regression batches are taken in chronological order; classification
/// batches follow a per-epoch shuffle drawn from the run seed.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<(RunRecord, Model), TrainError> {
    config.validate()?;
    let start = Instant::now();
    let arch = config.architecture(data)?;
    let mut model = build_model(&arch)?;
    let pretrain = if config.pretrain_mapping && !config.strict_mode {
        pretrain_model(&mut model, PRETRAIN_STEPS, PRETRAIN_LR, PRETRAIN_TARGET)?
    } else {
        Vec::new()
    };
    let initial_metric = evaluate(&model, data, false)?;
    let mut opt = Optimizer::new(config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ba7c4);
    let n = data.train_len();
    let mut per_epoch = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = epoch_lr(config, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        if config.task == Task::Classify {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let (loss, grads) = batch_step(&model, data, idx)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, loss });
            }
            total += loss * idx.len() as f64;
            if lr > 0.0 {
                opt.step(model.params.tensors_mut(), &grads, lr)?;
                if model.params.tensors().iter().any(|t| !t.is_finite()) {
                    return Err(TrainError::Divergence { epoch, loss: f64::NAN });
                }
            }
        }
        let train_loss = total / n as f64;
        let val_metric = evaluate(&model, data, true)?;
        if !val_metric.is_finite() {
            return Err(TrainError::Divergence { epoch, loss: train_loss });
        }
        per_epoch.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_metric,
        });
    }
    let final_metric = evaluate(&model, data, false)?;
    let record = RunRecord {
        report_version: RUN_RECORD_VERSION,
        config: config.clone(),
        metric: MetricKind::for_task(config.task),
        param_count: model.param_count(),
        pretrain,
        initial_metric,
        per_epoch,
        final_metric,
        wall_time: Some(start.elapsed().as_secs_f64()),
        seed: config.seed,
    };
    Ok((record, model))
}
