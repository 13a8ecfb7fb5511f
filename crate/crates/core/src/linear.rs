//! Unigram logistic-regression detector.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{CheckpointError, Container, NamedTensor};
use crate::corpus::{Post, Vocabulary, PAD};
use crate::scalar::Scalar;
use crate::seeds::{Mechanism, Seed, SeedSet};

const KIND: &str = "logistic";

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("post {0} has no label")]
    Unlabeled(String),
    #[error("invalid logistic config: {0}")]
    InvalidConfig(String),
    #[error("logistic training diverged at epoch {0}")]
    Diverged(usize),
    #[error("vocabulary hash {found:016x} does not match checkpoint {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-4,
            epochs: 30,
            learning_rate: 0.5,
            batch_size: 32,
            rng_seed: 0,
        }
    }
}

/// Sparse term-frequency vector, sorted by vocabulary index.
pub type Features = Vec<(usize, f64)>;

/// Counts of each lower form's vocabulary index; OOV tokens land on UNK.
pub fn featurize(post: &Post, vocab: &Vocabulary) -> Features {
    featurize_words(post.tokens.iter().map(|t| t.lower.as_str()), vocab)
}

pub fn featurize_words<'a>(words: impl IntoIterator<Item = &'a str>, vocab: &Vocabulary) -> Features {
    let mut counts = BTreeMap::new();
    for w in words {
        *counts.entry(vocab.id(w)).or_insert(0.0) += 1.0;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// One weight per vocabulary index; the PAD entry stays 0.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub vocab_hash: u64,
}

impl LogisticModel {
    pub fn zeros(vocab: &Vocabulary, l2: f64) -> Self {
        LogisticModel {
            weights: vec![0.0; vocab.len()],
            bias: 0.0,
            l2,
            vocab_hash: vocab.content_hash(),
        }
    }

    pub fn logit(&self, x: &Features) -> f64 {
        x.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>() + self.bias
    }

    /// `σ(w · counts + b)`.
    pub fn predict(&self, x: &Features) -> f64 {
        self.logit(x).sigmoid()
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), LinearError> {
        let found = vocab.content_hash();
        if found != self.vocab_hash {
            return Err(LinearError::VocabMismatch {
                expected: self.vocab_hash,
                found,
            });
        }
        Ok(())
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container {
            vocab_hash: self.vocab_hash,
            ..Container::default()
        };
        c.push(NamedTensor::new("logistic.weights", &[self.weights.len()], self.weights.clone()));
        c.push(NamedTensor::new("logistic.bias", &[1], vec![self.bias]));
        c.config.insert("kind".into(), KIND.into());
        c.config.insert("l2".into(), self.l2.into());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, LinearError> {
        c.check_kind(KIND)?;
        let w = c.get("logistic.weights")?;
        if w.shape.len() != 1 {
            return Err(CheckpointError::Shape {
                name: w.name.clone(),
                msg: format!("rank {}, expected 1", w.shape.len()),
            }
            .into());
        }
        let b = c.expect("logistic.bias", &[1])?;
        Ok(LogisticModel {
            weights: w.data.clone(),
            bias: b.data[0],
            l2: c.config_field("l2")?,
            vocab_hash: c.vocab_hash,
        })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), LinearError> {
        Ok(self.to_container().write(path)?)
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, LinearError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Seeded mini-batch gradient descent on mean BCE + `l2·‖w‖²`.
///
/// The penalty is applied as a proximal step, `w ← (w − lr·g) / (1 +
/// 2·lr·l2)`, which stays stable for any `l2`. The bias is not penalized.
pub fn train_logistic(posts: &[Post], vocab: &Vocabulary, config: &LogisticConfig) -> Result<LogisticModel, LinearError> {
    if posts.is_empty() {
        return Err(LinearError::EmptyTrainSet);
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(LinearError::InvalidConfig("batch_size and epochs must be positive".into()));
    }
    if !(config.l2 >= 0.0 && config.learning_rate >= 0.0 && config.l2.is_finite() && config.learning_rate.is_finite()) {
        return Err(LinearError::InvalidConfig("l2 and learning_rate must be finite and nonnegative".into()));
    }
    let data: Vec<(Features, f64)> = posts
        .iter()
        .map(|p| match p.label {
            Some(y) => Ok((featurize(p, vocab), if y { 1.0 } else { 0.0 })),
            None => Err(LinearError::Unlabeled(p.id.clone())),
        })
        .collect::<Result<_, _>>()?;
    let mut model = LogisticModel::zeros(vocab, config.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = config.learning_rate;
    let shrink = 1.0 / (1.0 + 2.0 * lr * config.l2);
    let mut grad = vec![0.0; model.weights.len()];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut g_b = 0.0;
            let mut touched = Vec::new();
            for &i in chunk {
                let (x, y) = &data[i];
                let p = model.predict(x);
                let pc = p.clamp(1e-12, 1.0 - 1e-12);
                total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
                let g = (p - y) * scale;
                g_b += g;
                for &(j, v) in x {
                    grad[j] += g * v;
                    touched.push(j);
                }
            }
            for (j, w) in model.weights.iter_mut().enumerate() {
                *w = (*w - lr * grad[j]) * shrink;
            }
            for j in touched {
                grad[j] = 0.0;
            }
            model.bias -= lr * g_b;
            model.weights[PAD] = 0.0;
        }
        if !total.is_finite() || !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(LinearError::Diverged(epoch));
        }
    }
    Ok(model)
}

/// Word types present in `post`, ranked by descending signed weight and
/// placed at their first occurrence; ties go to the earlier position.
pub fn coef_seeds(model: &LogisticModel, post: &Post, vocab: &Vocabulary, k: usize) -> SeedSet {
    coef_seeds_words(model, &post.lowers(), vocab, k)
}

pub fn coef_seeds_words(model: &LogisticModel, words: &[&str], vocab: &Vocabulary, k: usize) -> SeedSet {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (pos, w) in words.iter().enumerate() {
        first.entry(vocab.id(w)).or_insert(pos);
    }
    let mut ranked: Vec<Seed> = first
        .into_iter()
        .map(|(id, position)| Seed {
            position,
            score: model.weights.get(id).copied().unwrap_or(0.0),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
    ranked.truncate(k);
    SeedSet::new(ranked, k, Mechanism::Coef)
}
