use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_update, AdamState, ParamSet, Prediction};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng;

/// A differentiable two-class model.
pub trait Network: ParamSet + Clone + Send + Sync {
    type Input: Sync;

    fn forward_logits(&self, x: &Self::Input) -> Result<[f64; 2]>;

    /// Add d(loss)/d(params) for one example into `grads`; returns the loss.
    fn accumulate_gradient(&self, x: &Self::Input, label: Label, grads: &mut Self) -> Result<f64>;

    fn predict(&self, x: &Self::Input) -> Result<Prediction> {
        Ok(Prediction::from_logits(self.forward_logits(x)?))
    }
}

/// Batches are split into this many contiguous chunks; each chunk is summed
/// sequentially and chunk sums are added in order, so results do not depend
/// on the thread count.
const GRADIENT_CHUNKS: usize = 8;

/// Mean loss and mean gradient over `batch`.
pub fn backprop<M: Network>(model: &M, batch: &[(&M::Input, Label)]) -> Result<(f64, M)> {
    if batch.is_empty() {
        return Ok((0.0, model.zeros_like()));
    }
    let chunk = batch.len().div_ceil(GRADIENT_CHUNKS);
    let partials: Vec<Result<(f64, M)>> = batch
        .par_chunks(chunk)
        .map(|part| {
            let mut grads = model.zeros_like();
            let mut loss = 0.0;
            for (x, label) in part {
                loss += model.accumulate_gradient(x, *label, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect();
    let mut total_loss = 0.0;
    let mut total: Option<M> = None;
    for part in partials {
        let (loss, grads) = part?;
        total_loss += loss;
        match &mut total {
            Some(t) => t.add_assign(&grads),
            None => total = Some(grads),
        }
    }
    let mut grads = total.expect("non-empty batch");
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total_loss / n, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            seed: 0,
            patience: 5,
            validation_fraction: 0.1,
            learning_rate: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub train_size: usize,
    pub validation_size: usize,
}

impl TrainLog {
    pub fn best_validation_accuracy(&self) -> f64 {
        self.epochs
            .get(self.best_epoch.wrapping_sub(1))
            .map_or(0.0, |e| e.validation_accuracy)
    }
}

/// Mean of per-class accuracies over the classes present, in [0, 1].
pub(crate) fn macro_accuracy<M: Network>(model: &M, data: &[(&M::Input, Label)]) -> Result<f64> {
    let mut correct = [0usize; 2];
    let mut seen = [0usize; 2];
    for (x, label) in data {
        let k = label.index();
        seen[k] += 1;
        if model.predict(x)?.label == *label {
            correct[k] += 1;
        }
    }
    let present: Vec<f64> = (0..2)
        .filter(|&k| seen[k] > 0)
        .map(|k| correct[k] as f64 / seen[k] as f64)
        .collect();
    Ok(if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    })
}

/// Minibatch Adam on mean cross-entropy. Keeps the parameters of the epoch
/// with the best validation accuracy (earliest on ties) and stops after
/// `patience` epochs without improvement.
pub fn train<M: Network>(mut model: M, data: &[(M::Input, Label)], config: &TrainConfig) -> Result<(M, TrainLog)> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::Config(format!(
            "validation_fraction {} outside [0, 1)",
            config.validation_fraction
        )));
    }
    if !data.iter().any(|d| d.1 == Label::Real) || !data.iter().any(|d| d.1 == Label::Foil) {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, 1));
    let mut n_val = (data.len() as f64 * config.validation_fraction).round() as usize;
    if config.validation_fraction > 0.0 && data.len() >= 2 {
        n_val = n_val.clamp(1, data.len() - 1);
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let pairs = |idx: &[usize]| -> Vec<(&M::Input, Label)> { idx.iter().map(|&i| (&data[i].0, data[i].1)).collect() };
    let train_set = pairs(train_idx);
    let val_set = if val_idx.is_empty() { train_set.clone() } else { pairs(val_idx) };

    let mut state = AdamState::new(&model, config.learning_rate);
    let mut log = TrainLog {
        train_size: train_set.len(),
        validation_size: val_idx.len(),
        ..TrainLog::default()
    };
    let mut best: Option<(f64, M)> = None;
    let mut since_best = 0;
    let mut epoch_order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        epoch_order.shuffle(&mut rng::stream(config.seed, 100 + epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch_idx) in epoch_order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&M::Input, Label)> = batch_idx.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = backprop(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            adam_update(&mut model, &grads, &mut state)?;
        }
        let accuracy = macro_accuracy(&model, &val_set)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            validation_accuracy: accuracy,
        });
        if best.as_ref().is_none_or(|(a, _)| accuracy > *a) {
            best = Some((accuracy, model.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}
