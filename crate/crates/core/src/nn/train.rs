use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gradients, AttentionModel, Example, ModelParams};
use super::{ModelConfig, NnError};
use crate::embed::EmbeddingTable;
use crate::eval::detection_report;
use crate::scalar::Scalar;

const DECAY: f64 = 0.9;
const EPS: f64 = 1e-8;

/// `cache ← 0.9·cache + 0.1·g²; θ ← θ − lr·g / (√cache + 1e-8)`.
pub fn rmsprop_step<T: Scalar>(theta: &mut [T], g: &[T], cache: &mut [T], lr: T) {
    let decay = T::of(DECAY);
    let eps = T::of(EPS);
    for ((t, &g), c) in theta.iter_mut().zip(g).zip(cache.iter_mut()) {
        *c = decay * *c + (T::one() - decay) * g * g;
        *t -= lr * g / (c.sqrt() + eps);
    }
}

#[derive(Debug, Clone)]
pub struct Rmsprop<T> {
    cache: ModelParams<T>,
    lr: T,
}

impl<T: Scalar> Rmsprop<T> {
    pub fn new(params: &ModelParams<T>, learning_rate: f64) -> Self {
        Rmsprop {
            cache: params.zeros_like(),
            lr: T::of(learning_rate),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        let lr = self.lr;
        for (((_, p), (_, g)), (_, c)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.cache.tensors_mut())
        {
            rmsprop_step(p.data_mut(), g.data(), c.data_mut(), lr);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose snapshot was kept.
    pub selected_epoch: usize,
    pub selected_val_f1: f64,
}

fn dropout_mask<T: Scalar, R: Rng>(width: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..width)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// Validation F1 at threshold 0.5 for `model` on `val`.
fn validate<T: Scalar>(model: &AttentionModel<T>, val: &[Example]) -> Result<crate::eval::DetectionReport, NnError> {
    let pairs = val
        .iter()
        .map(|ex| Ok((ex.label, model.predict(&ex.input)?.p.as_f64())))
        .collect::<Result<Vec<_>, NnError>>()?;
    Ok(detection_report(&pairs, 0.5).expect("validation set is nonempty"))
}

/// Trains with RMSprop and inverted dropout on the output-layer input;
/// returns the epoch snapshot with the best validation F1 (earliest on ties).
///
/// All randomness (initialization, shuffling, dropout) comes from one
/// stream seeded by `config.rng_seed`.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    embeddings: EmbeddingTable<T>,
    vocab_hash: u64,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<(AttentionModel<T>, TrainingLog), NnError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut model = AttentionModel::with_rng(config.clone(), embeddings, vocab_hash, &mut rng)?;
    let mut opt = Rmsprop::new(&model.params, config.learning_rate);
    let width = config.feature_dim();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ModelParams<T>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let masks: Option<Vec<Vec<T>>> = (config.dropout_rate > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| dropout_mask(width, config.dropout_rate, &mut rng))
                    .collect()
            });
            let (loss, grads) = gradients(&model, &batch, masks.as_deref())?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, batch: b, loss });
            }
            opt.step(&mut model.params, &grads);
            if !model.params.all_finite() {
                return Err(NnError::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
            total += loss * batch.len() as f64;
        }
        let report = validate(&model, val_set)?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_precision: report.precision,
            val_recall: report.recall,
            val_f1: report.f1,
        });
        if best.as_ref().map_or(true, |(f1, _)| report.f1 > *f1) {
            best = Some((report.f1, model.params.clone()));
            log.selected_epoch = epoch;
            log.selected_val_f1 = report.f1;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}
