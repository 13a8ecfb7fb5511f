//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use crisis_core::explain::HighestSeed;
use crisis_core::lime::{FeatureLevel, LimeConfig};
use crisis_core::linear::LogisticConfig;
use crisis_core::nn::{Architecture, ModelConfig};
use crisis_core::seeds::Mechanism;

/// Every accepted key with its default ("" = unset) and help text.
pub const KEYS: &[(&str, &str, &str)] = &[
    // data
    ("input", "", "input file (dataset JSON-lines, or CoNLL-U for train-parser)"),
    ("output", "", "output file"),
    ("out_dir", "", "output directory for prep"),
    ("train", "", "training dataset"),
    ("val", "", "validation dataset"),
    ("gold", "", "gold dataset for evaluate"),
    ("predictions", "", "predictions for evaluate"),
    ("checkpoint", "", "detector checkpoint"),
    ("parser", "", "parser checkpoint"),
    ("log", "", "training log path"),
    ("embeddings", "", "word vectors (text, optionally .gz); random vectors when unset"),
    ("min_count", "1", "minimum token count for the vocabulary"),
    ("test_fraction", "0.2", "prep: share held out for test"),
    ("val_fraction", "0.125", "prep: share of the remainder held out for validation"),
    ("split_seed", "0", "prep: shuffle seed"),
    // synthetic data
    ("synth_posts", "2000", "synth: number of posts"),
    ("crisis_rate", "0.2", "synth: share of crisis posts"),
    ("treebank_sentences", "0", "synth: also write this many treebank sentences"),
    ("treebank_output", "", "synth: treebank path"),
    // detector
    ("model", "neural", "neural or logistic"),
    ("embed_dim", "200", "word vector dimension"),
    ("hidden", "100", "GRU units per direction"),
    ("max_len", "150", "tokens read per post"),
    ("dropout_rate", "0.1", "dropout before the output layer"),
    ("attention_l2_lambda", "0.0001", "weight of the squared-attention penalty"),
    ("learning_rate", "0.001", "RMSprop step size"),
    ("batch_size", "256", "posts per update"),
    ("epochs", "20", "training epochs; the best by validation F1 is kept"),
    ("architecture", "bi_attention", "bi_attention or forward_last"),
    ("rng_seed", "0", "seed for initialization, shuffling, dropout and synthesis"),
    ("embedding_scale", "0.5", "half-width of random embedding init"),
    ("logistic_l2", "0.0001", "logistic L2 strength"),
    ("logistic_epochs", "30", "logistic passes over the data"),
    ("logistic_learning_rate", "0.5", "logistic step size"),
    ("logistic_batch_size", "32", "logistic minibatch size"),
    // explanation
    ("mechanism", "lime", "coef, attention or lime"),
    ("k", "5", "number of seeds"),
    ("threshold", "0.5", "decision threshold"),
    ("seed_policy", "shallowest", "shallowest or top_score"),
    ("lime_num_samples", "1000", "perturbed samples per post"),
    ("lime_kernel_width", "", "default 0.75 * sqrt(features)"),
    ("lime_ridge_l2", "1.0", "surrogate ridge strength"),
    ("lime_features", "types", "types or positions"),
    ("lime_rng_seed", "0", "perturbation seed"),
    // parser
    ("tagger_iterations", "5", "tagger training passes"),
    ("parser_iterations", "10", "parser training passes"),
    // evaluate
    ("kind", "detection", "detection or explanation"),
];

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => bail!("unknown configuration key {key:?}"),
        }
    }

    /// Applies a `key = value` file; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| anyhow!("{key} = {raw:?}: {e}"))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        match self.raw(key) {
            "" => bail!("missing --{} (or `{key}` in the config file)", flag_name(key)),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        Some(self.raw(key)).filter(|p| !p.is_empty()).map(PathBuf::from)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let c = ModelConfig {
            embed_dim: self.get("embed_dim")?,
            hidden: self.get("hidden")?,
            max_len: self.get("max_len")?,
            dropout_rate: self.get("dropout_rate")?,
            attention_l2_lambda: self.get("attention_l2_lambda")?,
            learning_rate: self.get("learning_rate")?,
            batch_size: self.get("batch_size")?,
            epochs: self.get("epochs")?,
            architecture: self.get::<Architecture>("architecture")?,
            rng_seed: self.get("rng_seed")?,
        };
        c.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(c)
    }

    pub fn logistic_config(&self) -> Result<LogisticConfig> {
        Ok(LogisticConfig {
            l2: self.get("logistic_l2")?,
            epochs: self.get("logistic_epochs")?,
            learning_rate: self.get("logistic_learning_rate")?,
            batch_size: self.get("logistic_batch_size")?,
            rng_seed: self.get("rng_seed")?,
        })
    }

    pub fn lime_config(&self) -> Result<LimeConfig> {
        let c = LimeConfig {
            num_samples: self.get("lime_num_samples")?,
            num_features: self.get("k")?,
            kernel_width: self.optional("lime_kernel_width")?,
            ridge_l2: self.get("lime_ridge_l2")?,
            rng_seed: self.get("lime_rng_seed")?,
            features: self.get::<FeatureLevel>("lime_features")?,
        };
        c.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(c)
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        self.get("mechanism")
    }

    pub fn seed_policy(&self) -> Result<HighestSeed> {
        self.get("seed_policy")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.values).expect("string map serializes")
    }
}
