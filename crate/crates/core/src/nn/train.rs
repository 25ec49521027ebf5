//! Mini-batch training on KL loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{encode_graph, DnfGraph};
use super::model::{loss_and_gradients, ModelParams};
use super::optim::{adam_step, AdamConfig, AdamState};
use super::tensor::Matrix;
use crate::formula::{DnfFormula, WeightAssignment};
use crate::klm::GaussianLabel;
use crate::par::{map_slice, Execution};
use crate::rng::{stream, StreamTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Maximum global gradient norm.
    pub clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Stops after this many optimizer steps even mid-epoch.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            clip: adam.clip,
            epochs: 4,
            batch_size: 1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            clip: self.clip,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.clip > 0.0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("record `{record}` has a non-finite label")]
    BadLabel { record: String },
    #[error("non-finite loss {loss} on record `{record}`")]
    NonFiniteLoss { record: String, loss: f64 },
}

/// A labeled instance with its graph encoding precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub graph: DnfGraph,
    pub features: Vec<f64>,
    pub label: GaussianLabel,
}

impl TrainExample {
    pub fn new(id: impl Into<String>, formula: &DnfFormula, weights: &WeightAssignment, label: GaussianLabel) -> Self {
        let graph = encode_graph(formula);
        let features = graph.literal_features(weights);
        Self {
            id: id.into(),
            graph,
            features,
            label,
        }
    }
}

/// Mean KL loss and its gradient over `batch`.
///
/// Members are differentiated independently (in parallel when allowed) and
/// summed in batch order, so the result does not depend on scheduling.
pub fn compute_gradients(
    params: &ModelParams,
    batch: &[&TrainExample],
    exec: Execution,
) -> Result<(f64, Vec<Matrix>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let parts = map_slice(exec, batch, |ex| {
        loss_and_gradients(&ex.graph, &ex.features, params, ex.label.mean, ex.label.sigma)
    });
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut sum = params.zeros_like();
    for (ex, (loss, grads)) in batch.iter().zip(parts) {
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                record: ex.id.clone(),
                loss,
            });
        }
        total += loss;
        for (s, g) in sum.iter_mut().zip(&grads) {
            s.add_assign(g);
        }
    }
    for s in &mut sum {
        s.scale(scale);
    }
    Ok((total * scale, sum))
}

/// Mean loss of `params` over `examples`, without gradients.
pub fn mean_loss(params: &ModelParams, examples: &[TrainExample], exec: Execution) -> f64 {
    let losses = map_slice(exec, examples, |ex| {
        super::model::loss(&ex.graph, &ex.features, params, ex.label.mean, ex.label.sigma)
    });
    losses.iter().sum::<f64>() / examples.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch, before each update.
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Whether to keep training after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub fn train(
    examples: &[TrainExample],
    params: &mut ModelParams,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainReport, TrainError> {
    train_with(examples, params, cfg, exec, |_, _| Control::Continue)
}

/// Trains in place, calling `on_epoch` after every epoch (for logging,
/// checkpointing or early stopping).
pub fn train_with(
    examples: &[TrainExample],
    params: &mut ModelParams,
    cfg: &TrainConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochStats, &ModelParams) -> Control,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(bad) = examples
        .iter()
        .find(|e| !e.label.mean.is_finite() || !(e.label.sigma > 0.0) || !e.label.sigma.is_finite())
    {
        return Err(TrainError::BadLabel { record: bad.id.clone() });
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(&params.tensors);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        steps: 0,
        stopped_early: false,
    };
    let budget = cfg.max_steps.unwrap_or(usize::MAX);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, StreamTag::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if report.steps >= budget {
                break;
            }
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = compute_gradients(params, &batch, exec)?;
            adam_step(&mut params.tensors, grads, &mut state, &adam);
            loss_sum += loss;
            batches += 1;
            report.steps += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / batches.max(1) as f64,
            steps: report.steps,
        };
        log::info!("epoch {epoch}: mean loss {:.6} after {} steps", stats.mean_loss, stats.steps);
        let control = on_epoch(&stats, params);
        report.epochs.push(stats);
        if control == Control::Stop || report.steps >= budget {
            report.stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    Ok(report)
}
