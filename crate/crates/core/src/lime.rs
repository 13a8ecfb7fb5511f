//! Local surrogate explanations by word deletion.
//!
//! A post is perturbed by deleting whole word types, the black box scores
//! every variant, and a proximity-weighted ridge regression of those scores
//! on the type-presence masks gives one importance per word type.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::weighted_ridge;
use crate::seeds::{Mechanism, Seed, SeedSet};

#[derive(Debug, Error)]
pub enum LimeError<E> {
    #[error("cannot explain an empty post")]
    EmptyPost,
    #[error("invalid surrogate config: {0}")]
    InvalidConfig(String),
    #[error("surrogate fit failed")]
    Singular,
    #[error("black box failed: {0}")]
    BlackBox(E),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub num_samples: usize,
    pub num_features: usize,
    /// On cosine distance; `None` means `0.75 · √(number of features)`.
    pub kernel_width: Option<f64>,
    pub ridge_l2: f64,
    pub rng_seed: u64,
    pub features: FeatureLevel,
}

/// What one surrogate feature stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLevel {
    /// A word type; deleting it removes every occurrence.
    #[default]
    Types,
    /// A single token position.
    Positions,
}

impl std::str::FromStr for FeatureLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "types" => Ok(FeatureLevel::Types),
            "positions" => Ok(FeatureLevel::Positions),
            other => Err(format!("unknown feature level {other:?} (expected types or positions)")),
        }
    }
}

impl std::fmt::Display for FeatureLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureLevel::Types => "types",
            FeatureLevel::Positions => "positions",
        })
    }
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            num_samples: 1000,
            num_features: 5,
            kernel_width: None,
            ridge_l2: 1.0,
            rng_seed: 0,
            features: FeatureLevel::Types,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_samples < 10 {
            return Err("num_samples must be at least 10".into());
        }
        if self.num_features == 0 {
            return Err("num_features must be positive".into());
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err("kernel_width must be positive".into());
            }
        }
        if !(self.ridge_l2 > 0.0 && self.ridge_l2.is_finite()) {
            return Err("ridge_l2 must be positive".into());
        }
        Ok(())
    }
}

/// Distinct word types in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeIndex {
    pub types: Vec<String>,
    pub first_position: Vec<usize>,
    /// Type of every token.
    pub token_type: Vec<usize>,
}

impl TypeIndex {
    pub fn new<S: AsRef<str>>(words: &[S]) -> Self {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut idx = TypeIndex {
            types: Vec::new(),
            first_position: Vec::new(),
            token_type: Vec::with_capacity(words.len()),
        };
        for (pos, w) in words.iter().enumerate() {
            let w = w.as_ref();
            let t = *seen.entry(w).or_insert_with(|| {
                idx.types.push(w.to_string());
                idx.first_position.push(pos);
                idx.types.len() - 1
            });
            idx.token_type.push(t);
        }
        idx
    }

    /// Every token is its own feature.
    pub fn positions<S: AsRef<str>>(words: &[S]) -> Self {
        TypeIndex {
            types: words.iter().map(|w| w.as_ref().to_string()).collect(),
            first_position: (0..words.len()).collect(),
            token_type: (0..words.len()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Presence flag per word type.
    pub mask: Vec<bool>,
    /// Surviving tokens, in order.
    pub words: Vec<String>,
}

fn apply<S: AsRef<str>>(words: &[S], index: &TypeIndex, mask: &[bool]) -> Vec<String> {
    words
        .iter()
        .zip(&index.token_type)
        .filter(|(_, &t)| mask[t])
        .map(|(w, _)| w.as_ref().to_string())
        .collect()
}

/// Sample 0 keeps everything. Every other sample deletes all occurrences of
/// a uniform random subset of types whose size is uniform in `[1, types−1]`.
/// A single-type post only has the identity and the empty mask.
pub fn perturb<S: AsRef<str>>(words: &[S], n: usize, rng_seed: u64) -> Vec<Perturbation> {
    let index = TypeIndex::new(words);
    perturb_indexed(words, &index, n, rng_seed)
}

fn perturb_indexed<S: AsRef<str>>(words: &[S], index: &TypeIndex, n: usize, rng_seed: u64) -> Vec<Perturbation> {
    let m = index.len();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let mut masks = vec![vec![true; m]];
    if m == 1 {
        if n > 1 {
            masks.push(vec![false]);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for _ in 1..n {
            let k = rng.gen_range(1..m);
            let mut mask = vec![true; m];
            for t in sample(&mut rng, m, k) {
                mask[t] = false;
            }
            masks.push(mask);
        }
    }
    masks
        .into_iter()
        .map(|mask| Perturbation {
            words: apply(words, index, &mask),
            mask,
        })
        .collect()
}

/// Cosine distance between a binary mask and the all-ones vector.
pub fn cosine_distance(mask: &[bool]) -> f64 {
    let on = mask.iter().filter(|&&b| b).count();
    if mask.is_empty() || on == 0 {
        return 1.0;
    }
    1.0 - (on as f64 / mask.len() as f64).sqrt()
}

pub fn proximity(mask: &[bool], kernel_width: f64) -> f64 {
    let d = cosine_distance(mask);
    (-(d * d) / (kernel_width * kernel_width)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSurrogate {
    pub types: Vec<String>,
    pub first_position: Vec<usize>,
    pub importances: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub num_samples: usize,
    pub kernel_width: f64,
}

/// Fits the surrogate for one post. `black_box` receives the surviving
/// tokens of each perturbation (possibly none) and returns a probability.
pub fn explain_instance<S, F, E>(black_box: F, words: &[S], config: &LimeConfig) -> Result<LocalSurrogate, LimeError<E>>
where
    S: AsRef<str>,
    F: Fn(&[String]) -> Result<f64, E>,
{
    config.validate().map_err(LimeError::InvalidConfig)?;
    let index = match config.features {
        FeatureLevel::Types => TypeIndex::new(words),
        FeatureLevel::Positions => TypeIndex::positions(words),
    };
    if index.is_empty() {
        return Err(LimeError::EmptyPost);
    }
    let m = index.len();
    let width = config.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());
    let samples = perturb_indexed(words, &index, config.num_samples, config.rng_seed);
    let mut x = Vec::with_capacity(samples.len() * m);
    let mut y = Vec::with_capacity(samples.len());
    let mut w = Vec::with_capacity(samples.len());
    for s in &samples {
        y.push(black_box(&s.words).map_err(LimeError::BlackBox)?);
        x.extend(s.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        w.push(proximity(&s.mask, width));
    }
    let fit = weighted_ridge(&x, &y, &w, m, config.ridge_l2).ok_or(LimeError::Singular)?;
    Ok(LocalSurrogate {
        types: index.types,
        first_position: index.first_position,
        importances: fit.coef,
        intercept: fit.intercept,
        r2: fit.r2,
        num_samples: samples.len(),
        kernel_width: width,
    })
}

impl LocalSurrogate {
    /// Top-`k` types with positive importance at their first occurrence;
    /// ties go to the earlier position.
    pub fn seeds(&self, k: usize) -> SeedSet {
        let mut ranked: Vec<Seed> = self
            .importances
            .iter()
            .zip(&self.first_position)
            .filter(|(&v, _)| v > 0.0)
            .map(|(&score, &position)| Seed { position, score })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
        ranked.truncate(k);
        SeedSet::new(ranked, k, Mechanism::Lime)
    }
}

pub fn lime_seeds<S, F, E>(black_box: F, words: &[S], k: usize, config: &LimeConfig) -> Result<SeedSet, LimeError<E>>
where
    S: AsRef<str>,
    F: Fn(&[String]) -> Result<f64, E>,
{
    Ok(explain_instance(black_box, words, config)?.seeds(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;
    use std::convert::Infallible;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identity_first_and_deletion_semantics() {
        let w = words("i cut , i cut");
        let ps = perturb(&w, 1, 0);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].words, w);
        let idx = TypeIndex::new(&w);
        assert_eq!(idx.types, ["i", "cut", ","]);
        assert_eq!(apply(&w, &idx, &[true, false, true]), ["i", ",", "i"]);
    }

    #[test]
    fn masks_delete_between_one_and_all_but_one_type() {
        let w = words("a b c d e");
        for p in perturb(&w, 300, 9).iter().skip(1) {
            let off = p.mask.iter().filter(|&&b| !b).count();
            assert!((1..5).contains(&off));
        }
        assert_eq!(perturb(&w, 50, 9), perturb(&w, 50, 9));
    }

    #[test]
    fn single_type_post() {
        let ps = perturb(&words("help help"), 100, 1);
        assert_eq!(ps.len(), 2);
        assert!(ps[1].words.is_empty());
    }

    #[test]
    fn proximity_weights() {
        assert_eq!(proximity(&[true; 4], 1.5), 1.0);
        let p = proximity(&[true, false, false, false], 1.5);
        let d: f64 = 1.0 - 0.5;
        assert!((p - (-(d * d) / 2.25).exp()).abs() < 1e-15);
        assert!(proximity(&[false; 3], 0.1) > 0.0);
    }

    #[test]
    fn constant_black_box() {
        let s = explain_instance(|_: &[String]| Ok::<_, Infallible>(0.3), &words("a b c"), &LimeConfig::default()).unwrap();
        assert!(s.importances.iter().all(|&v| v == 0.0));
        assert_eq!(s.r2, 0.0);
        assert!(s.seeds(3).is_empty());
    }

    fn kill_box(ws: &[String]) -> Result<f64, Infallible> {
        let on = ws.iter().any(|w| w == "kill") as u8 as f64;
        Ok((2.0 * on - 1.0).sigmoid())
    }

    #[test]
    fn planted_word_dominates() {
        let w = words("i want to kill the pain today");
        let s = explain_instance(kill_box, &w, &LimeConfig::default()).unwrap();
        let top = s.seeds(1);
        assert_eq!(top.positions(), vec![3]);
        assert!(top.seeds[0].score > 0.0);
        for (t, &v) in s.types.iter().zip(&s.importances) {
            if t != "kill" {
                assert!(v.abs() < 0.05, "{t}: {v}");
            }
        }
        assert!(s.r2 > 0.9);
    }

    #[test]
    fn k_covers_only_positive_types() {
        let w = words("kill a b");
        let s = lime_seeds(kill_box, &w, 10, &LimeConfig::default()).unwrap();
        assert_eq!(s.positions(), vec![0]);
    }

    #[test]
    fn deterministic_and_errors_propagate() {
        let w = words("kill x y z");
        let c = LimeConfig::default();
        assert_eq!(lime_seeds(kill_box, &w, 2, &c).unwrap(), lime_seeds(kill_box, &w, 2, &c).unwrap());
        let failing = |_: &[String]| Err::<f64, _>("boom");
        assert!(matches!(explain_instance(failing, &w, &c), Err(LimeError::BlackBox("boom"))));
        assert!(matches!(explain_instance(kill_box, &Vec::<String>::new(), &c), Err(LimeError::EmptyPost)));
        let bad = LimeConfig {
            num_samples: 3,
            ..c
        };
        assert!(matches!(explain_instance(kill_box, &w, &bad), Err(LimeError::InvalidConfig(_))));
    }
}
