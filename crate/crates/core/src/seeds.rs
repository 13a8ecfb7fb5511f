//! Seed functions: which token positions drove a prediction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{CheckpointError, Container};
use crate::corpus::{encode_words, Post, Vocabulary};
use crate::lime::{lime_seeds, LimeConfig, LimeError};
use crate::linear::{coef_seeds_words, featurize_words, LinearError, LogisticModel};
use crate::nn::{Architecture, AttentionModel, NnError};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("the {mechanism} seed function cannot run on a {detector} detector")]
    Incompatible { mechanism: Mechanism, detector: &'static str },
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Lime(#[from] LimeError<NnError>),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Coef,
    Attention,
    Lime,
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coef" => Ok(Mechanism::Coef),
            "attention" => Ok(Mechanism::Attention),
            "lime" => Ok(Mechanism::Lime),
            other => Err(format!("unknown seed mechanism {other:?} (expected coef, attention or lime)")),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Coef => "coef",
            Mechanism::Attention => "attention",
            Mechanism::Lime => "lime",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub position: usize,
    pub score: f64,
}

/// Ranked seeds: distinct positions, scores nonincreasing, at most
/// `k_requested` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub seeds: Vec<Seed>,
    pub k_requested: usize,
    pub mechanism: Mechanism,
}

impl SeedSet {
    pub fn new(seeds: Vec<Seed>, k_requested: usize, mechanism: Mechanism) -> Self {
        let s = SeedSet {
            seeds,
            k_requested,
            mechanism,
        };
        debug_assert!(s.is_well_formed(usize::MAX));
        s
    }

    pub fn positions(&self) -> Vec<usize> {
        self.seeds.iter().map(|s| s.position).collect()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Checks the invariants against a post of `num_tokens` tokens.
    pub fn is_well_formed(&self, num_tokens: usize) -> bool {
        let mut pos = self.positions();
        pos.sort_unstable();
        pos.dedup();
        pos.len() == self.seeds.len()
            && self.seeds.len() <= self.k_requested
            && self.seeds.iter().all(|s| s.position < num_tokens && !s.score.is_nan())
            && self.seeds.windows(2).all(|w| w[0].score >= w[1].score)
    }
}

/// Top-`k` positions by attention weight, ties to the earlier position.
pub fn attention_seeds_from_alphas(alphas: &[f64], k: usize) -> SeedSet {
    let mut ranked: Vec<Seed> = alphas
        .iter()
        .enumerate()
        .map(|(position, &score)| Seed { position, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
    ranked.truncate(k);
    SeedSet::new(ranked, k, Mechanism::Attention)
}

pub fn attention_seeds<S: AsRef<str>>(
    model: &AttentionModel<f64>,
    vocab: &Vocabulary,
    words: &[S],
    k: usize,
) -> Result<SeedSet, SeedError> {
    if model.config.architecture != Architecture::BiAttention {
        return Err(NnError::Architecture(Architecture::BiAttention).into());
    }
    let enc = encode_words(words.iter().map(AsRef::as_ref), vocab, model.config.max_len);
    let alphas = model.predict(&enc)?.alphas.expect("attention architecture");
    Ok(attention_seeds_from_alphas(&alphas, k))
}

/// A trained detector together with the vocabulary it was built on.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Neural {
        model: AttentionModel<f64>,
        vocab: Vocabulary,
    },
    Logistic {
        model: LogisticModel,
        vocab: Vocabulary,
    },
}

/// Output of [`Detector::score`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub p: f64,
    pub alphas: Option<Vec<f64>>,
}

impl Detector {
    pub fn kind(&self) -> &'static str {
        match self {
            Detector::Neural { model, .. } => match model.config.architecture {
                Architecture::BiAttention => "neural (bi_attention)",
                Architecture::ForwardLast => "neural (forward_last)",
            },
            Detector::Logistic { .. } => "logistic",
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Detector::Neural { vocab, .. } | Detector::Logistic { vocab, .. } => vocab,
        }
    }

    /// Probability for a token sequence (lower forms). The empty sequence is
    /// allowed: the neural model then answers with its output bias alone.
    pub fn score<S: AsRef<str>>(&self, words: &[S]) -> Result<Scored, NnError> {
        match self {
            Detector::Neural { model, vocab } => {
                if words.is_empty() {
                    return Ok(Scored {
                        p: model.empty_input_probability(),
                        alphas: None,
                    });
                }
                let enc = encode_words(words.iter().map(AsRef::as_ref), vocab, model.config.max_len);
                let pred = model.predict(&enc)?;
                Ok(Scored {
                    p: pred.p,
                    alphas: pred.alphas,
                })
            }
            Detector::Logistic { model, vocab } => Ok(Scored {
                p: model.predict(&featurize_words(words.iter().map(AsRef::as_ref), vocab)),
                alphas: None,
            }),
        }
    }

    pub fn probability<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, NnError> {
        Ok(self.score(words)?.p)
    }

    pub fn score_post(&self, post: &Post) -> Result<Scored, NnError> {
        self.score(&post.lowers())
    }

    /// Per-token evidence used to pick a fallback sentence: attention
    /// weights for the attention model, positive coefficients for the
    /// logistic model, nothing for the last-state model.
    pub fn token_evidence<S: AsRef<str>>(&self, words: &[S]) -> Result<Option<Vec<f64>>, NnError> {
        match self {
            Detector::Neural { .. } => {
                if words.is_empty() {
                    return Ok(None);
                }
                Ok(self.score(words)?.alphas)
            }
            Detector::Logistic { model, vocab } => Ok(Some(
                words
                    .iter()
                    .map(|w| model.weights.get(vocab.id(w.as_ref())).copied().unwrap_or(0.0).max(0.0))
                    .collect(),
            )),
        }
    }

    pub fn to_container(&self) -> Container {
        let (mut c, vocab) = match self {
            Detector::Neural { model, vocab } => (model.to_container(), vocab),
            Detector::Logistic { model, vocab } => (model.to_container(), vocab),
        };
        c.config
            .insert("vocabulary".into(), serde_json::to_value(vocab).expect("vocabulary serializes"));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, SeedError> {
        let vocab: Vocabulary = c.config_field("vocabulary")?;
        let kind: String = c.config_field("kind")?;
        let det = if kind == "logistic" {
            let model = LogisticModel::from_container(c)?;
            model.check_vocab(&vocab)?;
            Detector::Logistic { model, vocab }
        } else {
            let model = AttentionModel::from_container(c)?;
            model.check_vocab(&vocab)?;
            Detector::Neural { model, vocab }
        };
        Ok(det)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SeedError> {
        Ok(self.to_container().write(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SeedError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// A seed function bound to one detector.
#[derive(Debug, Clone)]
pub struct Seeder<'a> {
    pub mechanism: Mechanism,
    pub detector: &'a Detector,
    pub lime: LimeConfig,
}

/// Pairs a mechanism with a detector: coefficients need the logistic model,
/// attention needs the attention model, the local surrogate takes either.
pub fn get_seeder(mechanism: Mechanism, detector: &Detector, lime: LimeConfig) -> Result<Seeder<'_>, SeedError> {
    let ok = match (mechanism, detector) {
        (Mechanism::Coef, Detector::Logistic { .. }) => true,
        (Mechanism::Attention, Detector::Neural { model, .. }) => model.config.architecture == Architecture::BiAttention,
        (Mechanism::Lime, _) => true,
        _ => false,
    };
    if !ok {
        return Err(SeedError::Incompatible {
            mechanism,
            detector: detector.kind(),
        });
    }
    Ok(Seeder {
        mechanism,
        detector,
        lime: lime.clone(),
    })
}

impl Seeder<'_> {
    pub fn seed_words<S: AsRef<str>>(&self, words: &[S], k: usize) -> Result<SeedSet, SeedError> {
        if k == 0 {
            return Err(SeedError::ZeroK);
        }
        if words.is_empty() {
            return Ok(SeedSet::new(Vec::new(), k, self.mechanism));
        }
        match (self.mechanism, self.detector) {
            (Mechanism::Coef, Detector::Logistic { model, vocab }) => {
                let w: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
                Ok(coef_seeds_words(model, &w, vocab, k))
            }
            (Mechanism::Attention, Detector::Neural { model, vocab }) => attention_seeds(model, vocab, words, k),
            (Mechanism::Lime, det) => Ok(lime_seeds(|ws: &[String]| det.probability(ws), words, k, &self.lime)?),
            _ => unreachable!("pairing checked by get_seeder"),
        }
    }

    pub fn seed(&self, post: &Post, k: usize) -> Result<SeedSet, SeedError> {
        self.seed_words(&post.lowers(), k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::embed::EmbeddingTable;
    use crate::nn::ModelConfig;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        build_vocab(&[Post::from_text("0", "kill the pain now please")], 1)
    }

    fn neural(arch: Architecture) -> Detector {
        let v = vocab();
        let config = ModelConfig {
            embed_dim: 4,
            hidden: 3,
            architecture: arch,
            ..ModelConfig::default()
        };
        let model = AttentionModel::new(config, EmbeddingTable::random(v.len(), 4, 0.5, 1), v.content_hash()).unwrap();
        Detector::Neural { model, vocab: v }
    }

    fn logistic() -> Detector {
        let v = vocab();
        let mut model = LogisticModel::zeros(&v, 0.0);
        model.weights[v.id("kill")] = 4.0;
        model.weights[v.id("pain")] = 1.0;
        model.bias = -2.0;
        Detector::Logistic { model, vocab: v }
    }

    #[test]
    fn uniform_and_one_hot_attention() {
        let s = attention_seeds_from_alphas(&[0.25; 4], 2);
        assert_eq!(s.positions(), vec![0, 1]);
        let s = attention_seeds_from_alphas(&[0.0, 0.0, 1.0], 1);
        assert_eq!(s.positions(), vec![2]);
    }

    #[test]
    fn pairing_rules() {
        let lr = logistic();
        let nn = neural(Architecture::BiAttention);
        let last = neural(Architecture::ForwardLast);
        let c = LimeConfig::default();
        assert!(get_seeder(Mechanism::Coef, &lr, c.clone()).is_ok());
        assert!(get_seeder(Mechanism::Lime, &lr, c.clone()).is_ok());
        assert!(get_seeder(Mechanism::Attention, &nn, c.clone()).is_ok());
        assert!(get_seeder(Mechanism::Lime, &nn, c.clone()).is_ok());
        assert!(get_seeder(Mechanism::Lime, &last, c.clone()).is_ok());
        assert!(matches!(get_seeder(Mechanism::Attention, &lr, c.clone()), Err(SeedError::Incompatible { .. })));
        assert!(matches!(get_seeder(Mechanism::Coef, &nn, c.clone()), Err(SeedError::Incompatible { .. })));
        assert!(matches!(get_seeder(Mechanism::Attention, &last, c), Err(SeedError::Incompatible { .. })));
    }

    #[test]
    fn dispatch_matches_the_underlying_functions() {
        let lr = logistic();
        let post = Post::from_text("1", "please kill the pain");
        let s = get_seeder(Mechanism::Coef, &lr, LimeConfig::default()).unwrap();
        let got = s.seed(&post, 2).unwrap();
        let Detector::Logistic { model, vocab } = &lr else { unreachable!() };
        assert_eq!(got, crate::linear::coef_seeds(model, &post, vocab, 2));
        assert_eq!(got.positions(), vec![1, 3]);

        let s = get_seeder(Mechanism::Lime, &lr, LimeConfig::default()).unwrap();
        let got = s.seed(&post, 1).unwrap();
        assert_eq!(got.positions(), vec![1]);
        assert_eq!(got.mechanism, Mechanism::Lime);
    }

    #[test]
    fn empty_input_is_scored() {
        let nn = neural(Architecture::BiAttention);
        let Detector::Neural { model, .. } = &nn else { unreachable!() };
        assert_eq!(nn.probability(&Vec::<String>::new()).unwrap(), model.empty_input_probability());
        assert_eq!(logistic().probability(&Vec::<String>::new()).unwrap(), crate::scalar::Scalar::sigmoid(-2.0));
    }

    #[test]
    fn detector_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for det in [logistic(), neural(Architecture::BiAttention), neural(Architecture::ForwardLast)] {
            let p = dir.path().join("d.rkt");
            det.save(&p).unwrap();
            let back = Detector::load(&p).unwrap();
            assert_eq!(back, det);
            let w = ["kill", "now"];
            assert_eq!(back.probability(&w).unwrap().to_bits(), det.probability(&w).unwrap().to_bits());
        }
    }

    #[test]
    fn mechanism_names() {
        for m in [Mechanism::Coef, Mechanism::Attention, Mechanism::Lime] {
            assert_eq!(m.to_string().parse::<Mechanism>().unwrap(), m);
        }
        assert!("grad".parse::<Mechanism>().is_err());
    }

    fn any_post() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(
            prop_oneof!["kill", "the", "pain", "now", "please", "xyz"].prop_map(String::from),
            1..12,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn every_seeder_output_is_well_formed(words in any_post(), k in 1usize..6) {
            let lr = logistic();
            let nn = neural(Architecture::BiAttention);
            let lime = LimeConfig { num_samples: 60, ..LimeConfig::default() };
            for (m, d) in [(Mechanism::Coef, &lr), (Mechanism::Lime, &lr), (Mechanism::Attention, &nn), (Mechanism::Lime, &nn)] {
                let s = get_seeder(m, d, lime.clone()).unwrap().seed_words(&words, k).unwrap();
                prop_assert!(s.is_well_formed(words.len()), "{m}: {s:?}");
                prop_assert_eq!(s.mechanism, m);
            }
        }
    }
}
