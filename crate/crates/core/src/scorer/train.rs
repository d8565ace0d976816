use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{featurize, Features};
use super::model::{batch_loss_grad, forward_features, Example, ScorerParams};
use super::tape::Tensor;
use super::{OptimizerKind, ScorerError, TrainConfig};
use crate::structio::MaskedGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub params: ScorerParams,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, params: &ScorerParams) -> Self {
        Optimizer {
            kind,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn apply(&mut self, params: &mut ScorerParams, grads: &[Tensor], lr: f64) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors.iter_mut().zip(grads) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - ADAM_BETA1.powi(self.step);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.step);
                for (i, (p, g)) in params.tensors.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.m[i].data;
                    let v = &mut self.v[i].data;
                    for (k, (w, d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * d;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * d * d;
                        let mhat = m[k] / bc1;
                        let vhat = v[k] / bc2;
                        *w -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Multiplies the rate by `decay` once the monitored loss has gone more
/// than `patience` epochs without improving.
struct PlateauScheduler {
    patience: usize,
    decay: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    fn step(&mut self, loss: f64, lr: &mut f64) {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.patience {
                *lr *= self.decay;
                self.bad_epochs = 0;
            }
        }
    }
}

fn featurize_all(params: &ScorerParams, data: &[MaskedGraph]) -> Result<Vec<Features>, ScorerError> {
    data.par_iter()
        .map(|m| featurize(m, &params.spec))
        .collect()
}

/// Mean loss and accuracy without dropout.
fn evaluate(params: &ScorerParams, features: &[Features], data: &[MaskedGraph]) -> (f64, f64) {
    let results: Vec<(f64, bool)> = features
        .par_iter()
        .zip(data.par_iter())
        .map(|(f, m)| {
            let sv = forward_features(params, f);
            (sv.cross_entropy(m.true_label), sv.argmax() == m.true_label)
        })
        .collect();
    let n = results.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = results.iter().filter(|r| r.1).count() as f64 / n;
    (loss, acc)
}

fn dropout_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((epoch as u64) << 40)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Trains the scorer on `train`, monitoring `validation` (or the training
/// loss when no validation set is given) for the plateau schedule and for
/// choosing the returned checkpoint.
pub fn train_res(
    init: ScorerParams,
    train: &[MaskedGraph],
    validation: &[MaskedGraph],
    config: &TrainConfig,
) -> Result<TrainOutcome, ScorerError> {
    if train.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(ScorerError::Config("batch size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(ScorerError::Config(format!("dropout {} outside [0, 1)", config.dropout)));
    }
    init.validate()?;
    let train_features = featurize_all(&init, train)?;
    let val_features = featurize_all(&init, validation)?;

    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut optimizer = Optimizer::new(config.optimizer, &params);
    let mut scheduler = PlateauScheduler {
        patience: config.scheduler_patience,
        decay: config.decay_rate,
        best: f64::INFINITY,
        bad_epochs: 0,
    };
    let mut lr = config.learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let examples: Vec<Example> = batch
                .iter()
                .enumerate()
                .map(|(k, &i)| Example {
                    features: &train_features[i],
                    label: train[i].true_label,
                    dropout: Some((config.dropout, dropout_seed(config.seed, epoch, b * config.batch_size + k))),
                })
                .collect();
            let (loss, grads, c) = batch_loss_grad(&params, &examples);
            loss_sum += loss * batch.len() as f64;
            correct += c;
            optimizer.apply(&mut params, &grads, lr);
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_accuracy = correct as f64 / train.len() as f64;
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(&params, &val_features, validation)
        };
        let monitored = if validation.is_empty() { train_loss } else { val_loss };
        history.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        });
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {train_accuracy:.3}, val loss {val_loss:.4} acc {val_accuracy:.3}, lr {lr:.2e}"
        );
        if monitored < best_loss {
            best_loss = monitored;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        scheduler.step(monitored, &mut lr);
    }
    if config.epochs == 0 {
        best = params;
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
    })
}

/// Fraction of graphs whose argmax prediction equals the true label.
pub fn evaluate_accuracy(params: &ScorerParams, dataset: &[MaskedGraph]) -> Result<f64, ScorerError> {
    if dataset.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    params.validate()?;
    let features = featurize_all(params, dataset)?;
    Ok(evaluate(params, &features, dataset).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_waits_for_patience() {
        let mut s = PlateauScheduler {
            patience: 2,
            decay: 0.5,
            best: f64::INFINITY,
            bad_epochs: 0,
        };
        let mut lr = 1.0;
        for loss in [1.0, 0.9, 0.95, 0.95] {
            s.step(loss, &mut lr);
        }
        assert_eq!(lr, 1.0);
        s.step(0.95, &mut lr);
        assert_eq!(lr, 0.5);
        s.step(0.8, &mut lr);
        assert_eq!(lr, 0.5);
    }
}
