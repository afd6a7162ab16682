//! Adam training loop with early stopping and gradual unfreezing.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, token_accuracy};
use crate::corpus::EncodedExample;
use crate::error::{Error, Result};
use crate::head_loss::LossWeights;
use crate::model::{LayerGroup, TitleModel};
use crate::nn::ModelRng;

/// Examples per gradient-accumulation task. Partial gradients are summed in
/// chunk order, so results do not depend on the thread count.
const CHUNK: usize = 8;

/// Validation quantity used for model selection and early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Rouge1F1,
    /// Per-token accuracy; used for replaced-token detection.
    TokenAccuracy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unfreezing {
    /// Every layer group trains from the first step.
    All,
    /// Head only in epoch 1; each later epoch adds the next group down.
    Gradual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub wallclock_budget_secs: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub selection: Selection,
    pub unfreezing: Unfreezing,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            max_epochs: 15,
            wallclock_budget_secs: 3600.0,
            patience: 3,
            batch_size: 64,
            seed: 0,
            loss_weights: LossWeights::FINE_TUNE,
            selection: Selection::Rouge1F1,
            unfreezing: Unfreezing::All,
            max_steps: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Adam with bias correction. Moments of frozen tensors are left alone.
pub struct Adam {
    m: TitleModel,
    v: TitleModel,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(model: &TitleModel, config: &TrainingConfig) -> Self {
        Adam {
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
        }
    }

    pub fn step(&mut self, model: &mut TitleModel, grads: &TitleModel, trainable: &[LayerGroup]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = model.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            if !trainable.contains(&p.group) {
                continue;
            }
            let (mut p, mut m, mut v) = (p.value, m.value, v.value);
            ndarray::Zip::from(&mut p)
                .and(&mut m)
                .and(&mut v)
                .and(&g.value)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Mean loss over `batch`; the mean gradient goes into the returned model.
/// Example `k` of the epoch draws its dropout masks from its own stream.
pub fn batch_gradients(
    model: &TitleModel,
    batch: &[(u64, &EncodedExample)],
    weights: LossWeights,
    trainable: &[LayerGroup],
    seed: u64,
) -> Result<(f64, TitleModel)> {
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, TitleModel)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zeros_like();
            let mut loss = 0.0;
            for &(stream, ex) in chunk {
                let mut rng = ModelRng::seed_from_u64(seed);
                rng.set_stream(stream);
                loss += model.accumulate_gradients(ex, weights, Some(&mut rng), trainable, &mut grads, scale)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss * scale, total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub val_em: f64,
    pub lr: f64,
    /// Trainable groups joined with `+`, top first.
    pub unfrozen_layers: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Wallclock,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Validation selection score per epoch.
    pub scores: Vec<f64>,
    /// One-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_score: f64,
    pub steps: usize,
    pub stop: StopReason,
}

impl TrainReport {
    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(parent) = path.as_ref().parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for rec in &self.history {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Groups that train during `epoch` (one-based).
pub fn trainable_groups(model: &TitleModel, unfreezing: Unfreezing, epoch: usize) -> Vec<LayerGroup> {
    let order = model.unfreeze_order();
    match unfreezing {
        Unfreezing::All => order,
        Unfreezing::Gradual => order[..epoch.clamp(1, order.len())].to_vec(),
    }
}

/// Validation score under `selection`, plus ROUGE-1 F1 and EM for the history.
fn validate(model: &TitleModel, val: &[EncodedExample], selection: Selection) -> Result<(f64, f64, f64)> {
    let report = evaluate(model, val)?;
    let score = match selection {
        Selection::Rouge1F1 => report.rouge1_f1,
        Selection::TokenAccuracy => token_accuracy(model, val)?.accuracy,
    };
    Ok((score, report.rouge1_f1, report.em))
}

/// Trains until the epoch cap, the wall-clock budget, the step cap or
/// `patience` epochs without validation improvement, then restores the best
/// epoch's parameters.
pub fn train(
    model: &mut TitleModel,
    train_set: &[EncodedExample],
    val_set: &[EncodedExample],
    config: &TrainingConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    let started = Instant::now();
    let mut adam = Adam::new(model, config);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ModelRng::seed_from_u64(config.seed);
    let mut history = Vec::new();
    let mut scores = Vec::new();
    let mut best: Option<(f64, usize, Vec<ndarray::ArrayD<f64>>)> = None;
    let mut since_best = 0;
    let mut steps = 0;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let trainable = trainable_groups(model, config.unfreezing, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let mut interrupted = None;
        for (b, batch_ids) in order.chunks(config.batch_size).enumerate() {
            let base = ((epoch as u64) << 40) + (b * config.batch_size) as u64;
            let batch: Vec<(u64, &EncodedExample)> = batch_ids
                .iter()
                .enumerate()
                .map(|(k, &i)| (base + k as u64, &train_set[i]))
                .collect();
            let (loss, grads) = batch_gradients(model, &batch, config.loss_weights, &trainable, config.seed)?;
            adam.step(model, &grads, &trainable);
            loss_sum += loss;
            batches += 1;
            steps += 1;
            if config.max_steps.is_some_and(|cap| steps >= cap) {
                interrupted = Some(StopReason::MaxSteps);
                break;
            }
            if started.elapsed().as_secs_f64() >= config.wallclock_budget_secs {
                interrupted = Some(StopReason::Wallclock);
                break;
            }
        }
        let (score, val_f1, val_em) = validate(model, val_set, config.selection)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_f1,
            val_em,
            lr: config.learning_rate,
            unfrozen_layers: trainable.iter().map(ToString::to_string).collect::<Vec<_>>().join("+"),
        });
        scores.push(score);
        log::info!("epoch {epoch}: loss {:.5} val_f1 {val_f1:.4} val_em {val_em:.2}", loss_sum / batches as f64);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(reason) = interrupted {
            stop = reason;
            break;
        }
        if since_best >= config.patience {
            stop = StopReason::Patience;
            break;
        }
    }
    let (best_score, best_epoch, snapshot) = best.expect("at least one epoch ran");
    model.restore(&snapshot);
    Ok(TrainReport {
        history,
        scores,
        best_epoch,
        best_score,
        steps,
        stop,
    })
}

/// [`train`] with gradual top-down unfreezing and a fixed learning rate.
pub fn fine_tune(
    model: &mut TitleModel,
    train_set: &[EncodedExample],
    val_set: &[EncodedExample],
    config: &TrainingConfig,
) -> Result<TrainReport> {
    let config = TrainingConfig {
        unfreezing: Unfreezing::Gradual,
        ..config.clone()
    };
    train(model, train_set, val_set, &config)
}
