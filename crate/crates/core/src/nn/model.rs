use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{attend_backward, attend_unchecked, Attention, AttentionParams};
use super::gru::{step_backward, step_cached, GruParams, StepCache};
use super::tensor::{dot, Tensor};
use super::{Architecture, ModelConfig, NnError};
use crate::checkpoint::{CheckpointError, Container, NamedTensor};
use crate::corpus::{EncodedPost, Vocabulary};
use crate::embed::EmbeddingTable;
use crate::scalar::Scalar;

const INIT_SCALE: f64 = 0.08;
const KIND: &str = "attention_model";

/// One labelled training input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: EncodedPost,
    pub label: bool,
}

/// Every trainable tensor of the detector. The embedding table is frozen
/// and lives on [`AttentionModel`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// `D × D`, applied to every embedding before the recurrence.
    pub embed_transform: Tensor<T>,
    pub forward: GruParams<T>,
    pub backward: Option<GruParams<T>>,
    pub attention: Option<AttentionParams<T>>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, h) = (config.embed_dim, config.hidden);
        let bi = config.architecture == Architecture::BiAttention;
        ModelParams {
            embed_transform: Tensor::zeros(&[d, d]),
            forward: GruParams::zeros(d, h),
            backward: bi.then(|| GruParams::zeros(d, h)),
            attention: bi.then(|| AttentionParams::zeros(2 * h)),
            out_w: Tensor::zeros(&[config.feature_dim()]),
            out_b: Tensor::zeros(&[1]),
        }
    }

    /// Weights uniform in `(-0.08, 0.08)`, biases zero.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        for (name, t) in p.tensors_mut() {
            if is_bias(&name) {
                continue;
            }
            for x in t.data_mut() {
                *x = T::of(rng.gen_range(-INIT_SCALE..INIT_SCALE));
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Stable names, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("embed_transform".to_string(), &self.embed_transform)];
        out.extend(self.forward.tensors().map(|(n, t)| (format!("gru_fwd.{n}"), t)));
        if let Some(b) = &self.backward {
            out.extend(b.tensors().map(|(n, t)| (format!("gru_bwd.{n}"), t)));
        }
        if let Some(a) = &self.attention {
            out.push(("attention.w".to_string(), &a.w));
            out.push(("attention.b".to_string(), &a.b));
        }
        out.push(("output.w".to_string(), &self.out_w));
        out.push(("output.b".to_string(), &self.out_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![("embed_transform".to_string(), &mut self.embed_transform)];
        out.extend(self.forward.tensors_mut().map(|(n, t)| (format!("gru_fwd.{n}"), t)));
        if let Some(b) = &mut self.backward {
            out.extend(b.tensors_mut().map(|(n, t)| (format!("gru_bwd.{n}"), t)));
        }
        if let Some(a) = &mut self.attention {
            out.push(("attention.w".to_string(), &mut a.w));
            out.push(("attention.b".to_string(), &mut a.b));
        }
        out.push(("output.w".to_string(), &mut self.out_w));
        out.push(("output.b".to_string(), &mut self.out_b));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.contains(".b_")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub p: T,
    /// Present for the attention architecture only.
    pub alphas: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel<T> {
    pub config: ModelConfig,
    pub embeddings: EmbeddingTable<T>,
    pub params: ModelParams<T>,
    /// Hash of the vocabulary the embedding rows are indexed by.
    pub vocab_hash: u64,
}

/// Intermediate values of one forward pass.
struct Trace<T> {
    xs: Vec<Vec<T>>,
    fwd: Vec<StepCache<T>>,
    /// `bwd[t]` is the backward-direction step that consumed `xs[t]`.
    bwd: Vec<StepCache<T>>,
    h_bi: Vec<Vec<T>>,
    att: Option<Attention<T>>,
    features: Vec<T>,
}

impl<T: Scalar> AttentionModel<T> {
    /// Freshly initialized model, seeded by `config.rng_seed`.
    pub fn new(config: ModelConfig, embeddings: EmbeddingTable<T>, vocab_hash: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Self::with_rng(config, embeddings, vocab_hash, &mut rng)
    }

    pub fn with_rng<R: Rng>(
        config: ModelConfig,
        embeddings: EmbeddingTable<T>,
        vocab_hash: u64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        config.validate()?;
        if embeddings.dim() != config.embed_dim {
            return Err(NnError::Dimension(format!(
                "embeddings have dimension {}, config says {}",
                embeddings.dim(),
                config.embed_dim
            )));
        }
        let params = ModelParams::init(&config, rng);
        Ok(AttentionModel {
            config,
            embeddings,
            params,
            vocab_hash,
        })
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), NnError> {
        let found = vocab.content_hash();
        if found != self.vocab_hash {
            return Err(NnError::VocabMismatch {
                expected: self.vocab_hash,
                found,
            });
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), NnError> {
        if ids.is_empty() {
            return Err(NnError::EmptyInput);
        }
        let n = self.embeddings.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(NnError::Dimension(format!("token id {bad} outside embedding table of {n} rows")));
        }
        Ok(())
    }

    fn run_forward(&self, ids: &[usize]) -> Trace<T> {
        let h = self.config.hidden;
        let xs: Vec<Vec<T>> = ids
            .iter()
            .map(|&id| self.params.embed_transform.matvec(self.embeddings.row(id)))
            .collect();
        let mut fwd = Vec::with_capacity(xs.len());
        let mut state = vec![T::zero(); h];
        for x in &xs {
            let c = step_cached(&self.params.forward, x, &state);
            state.clone_from(&c.h);
            fwd.push(c);
        }
        match (&self.params.backward, &self.params.attention) {
            (Some(bp), Some(ap)) => {
                let mut bwd = Vec::with_capacity(xs.len());
                let mut state = vec![T::zero(); h];
                for x in xs.iter().rev() {
                    let c = step_cached(bp, x, &state);
                    state.clone_from(&c.h);
                    bwd.push(c);
                }
                bwd.reverse();
                let h_bi: Vec<Vec<T>> = fwd
                    .iter()
                    .zip(&bwd)
                    .map(|(f, b)| f.h.iter().chain(&b.h).copied().collect())
                    .collect();
                let att = attend_unchecked(ap, &h_bi);
                let features = att.d.clone();
                Trace {
                    xs,
                    fwd,
                    bwd,
                    h_bi,
                    att: Some(att),
                    features,
                }
            }
            _ => {
                let features = fwd.last().map(|c| c.h.clone()).unwrap_or_default();
                Trace {
                    xs,
                    fwd,
                    bwd: Vec::new(),
                    h_bi: Vec::new(),
                    att: None,
                    features,
                }
            }
        }
    }

    /// Concatenated forward/backward states over the unpadded positions.
    pub fn encode_bi(&self, input: &EncodedPost) -> Result<Vec<Vec<T>>, NnError> {
        if self.config.architecture != Architecture::BiAttention {
            return Err(NnError::Architecture(Architecture::BiAttention));
        }
        self.check_ids(input.active())?;
        Ok(self.run_forward(input.active()).h_bi)
    }

    /// Inference on an encoded post; dropout is off.
    pub fn predict(&self, input: &EncodedPost) -> Result<Prediction<T>, NnError> {
        self.predict_ids(input.active())
    }

    pub fn predict_ids(&self, ids: &[usize]) -> Result<Prediction<T>, NnError> {
        self.check_ids(ids)?;
        let trace = self.run_forward(ids);
        let logit = dot(self.params.out_w.data(), &trace.features) + self.params.out_b.data()[0];
        Ok(Prediction {
            p: logit.sigmoid(),
            alphas: trace.att.map(|a| a.alphas),
        })
    }

    /// Output for an input with no tokens: the bias alone.
    pub fn empty_input_probability(&self) -> T {
        self.params.out_b.data()[0].sigmoid()
    }

    /// Loss of one example; with `grads`, also accumulates `scale · ∂loss/∂θ`.
    fn example_loss(&self, ex: &Example, mask: Option<&[T]>, scale: T, grads: Option<&mut ModelParams<T>>) -> T {
        let ids = ex.input.active();
        let trace = self.run_forward(ids);
        let features: Vec<T> = match mask {
            Some(m) => trace.features.iter().zip(m).map(|(&f, &k)| f * k).collect(),
            None => trace.features.clone(),
        };
        let logit = dot(self.params.out_w.data(), &features) + self.params.out_b.data()[0];
        let p = logit.sigmoid();
        let lambda = T::of(self.config.attention_l2_lambda);
        let alphas = trace.att.as_ref().map(|a| a.alphas.as_slice());
        let value = loss(p, ex.label, alphas, lambda);
        let Some(grads) = grads else {
            return value;
        };

        let y = if ex.label { T::one() } else { T::zero() };
        let g_logit = scale * (p - y);
        super::tensor::axpy(g_logit, &features, grads.out_w.data_mut());
        grads.out_b.data_mut()[0] += g_logit;
        let mut g_feat: Vec<T> = self.params.out_w.data().iter().map(|&w| g_logit * w).collect();
        if let Some(m) = mask {
            g_feat.iter_mut().zip(m).for_each(|(g, &k)| *g *= k);
        }

        let n = ids.len();
        let h = self.config.hidden;
        let mut g_x = vec![vec![T::zero(); self.config.embed_dim]; n];
        let mut g_fwd = vec![vec![T::zero(); h]; n];
        if let (Some(att), Some(ap), Some(bp)) = (&trace.att, &self.params.attention, &self.params.backward) {
            let two = T::of(2.0);
            let g_alpha: Vec<T> = att.alphas.iter().map(|&a| scale * two * lambda * a).collect();
            let mut g_h = vec![vec![T::zero(); 2 * h]; n];
            let ga = grads.attention.as_mut().expect("gradient layout mirrors the model");
            attend_backward(ap, &trace.h_bi, att, &g_feat, &g_alpha, ga, &mut g_h);
            let gb = grads.backward.as_mut().expect("gradient layout mirrors the model");
            let mut carry = vec![T::zero(); h];
            for t in 0..n {
                let g: Vec<T> = g_h[t][h..].iter().zip(&carry).map(|(&a, &b)| a + b).collect();
                carry = step_backward(bp, &trace.bwd[t], &trace.xs[t], &g, gb, &mut g_x[t]);
            }
            for (dst, src) in g_fwd.iter_mut().zip(&g_h) {
                dst.copy_from_slice(&src[..h]);
            }
        } else {
            g_fwd[n - 1].copy_from_slice(&g_feat);
        }
        let mut carry = vec![T::zero(); h];
        for t in (0..n).rev() {
            let g: Vec<T> = g_fwd[t].iter().zip(&carry).map(|(&a, &b)| a + b).collect();
            carry = step_backward(&self.params.forward, &trace.fwd[t], &trace.xs[t], &g, &mut grads.forward, &mut g_x[t]);
        }
        for (g, &id) in g_x.iter().zip(ids) {
            grads.embed_transform.outer_acc(g, self.embeddings.row(id));
        }
        value
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container {
            vocab_hash: self.vocab_hash,
            ..Container::default()
        };
        let emb = self.embeddings.matrix();
        c.push(NamedTensor::new("embeddings", emb.shape(), emb.cast::<f64>().data().to_vec()));
        for (name, t) in self.params.tensors() {
            c.push(NamedTensor::new(name, t.shape(), t.cast::<f64>().data().to_vec()));
        }
        c.config.insert("kind".into(), KIND.into());
        c.config
            .insert("model_config".into(), serde_json::to_value(&self.config).expect("config serializes"));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, NnError> {
        c.check_kind(KIND)?;
        let config: ModelConfig = c.config_field("model_config")?;
        config.validate()?;
        let emb = c.get("embeddings")?;
        if emb.shape.len() != 2 || emb.shape[1] != config.embed_dim {
            return Err(CheckpointError::Shape {
                name: "embeddings".into(),
                msg: format!("shape {:?} does not fit embed_dim {}", emb.shape, config.embed_dim),
            }
            .into());
        }
        let matrix = Tensor::from_vec(&emb.shape, emb.data.iter().map(|&x| T::of(x)).collect())
            .expect("payload length checked on read");
        let mut params = ModelParams::<T>::zeros(&config);
        for (name, t) in params.tensors_mut() {
            let src = c.expect(&name, &t.shape().to_vec())?;
            for (dst, &x) in t.data_mut().iter_mut().zip(&src.data) {
                *dst = T::of(x);
            }
        }
        Ok(AttentionModel {
            config,
            embeddings: EmbeddingTable::from_matrix(matrix),
            params,
            vocab_hash: c.vocab_hash,
        })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        Ok(self.to_container().write(path)?)
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_container(&Container::read(path)?)
    }
}

const P_CLAMP: f64 = 1e-12;

/// Binary cross-entropy plus `λ Σ α²`; `p` is clamped away from 0 and 1.
pub fn loss<T: Scalar>(p: T, y: bool, alphas: Option<&[T]>, lambda: T) -> T {
    let eps = T::of(P_CLAMP);
    let p = p.max(eps).min(T::one() - eps);
    let bce = if y { -p.ln() } else { -(T::one() - p).ln() };
    let penalty = alphas.map_or(T::zero(), |a| lambda * a.iter().map(|&x| x * x).sum::<T>());
    bce + penalty
}

fn check_batch<T: Scalar>(model: &AttentionModel<T>, batch: &[Example], masks: Option<&[Vec<T>]>) -> Result<(), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    for ex in batch {
        model.check_ids(ex.input.active())?;
    }
    if let Some(m) = masks {
        let width = model.config.feature_dim();
        if m.len() != batch.len() || m.iter().any(|v| v.len() != width) {
            return Err(NnError::Dimension("one dropout mask of the feature width per example".into()));
        }
    }
    Ok(())
}

/// Mean loss over `batch`. `masks` are per-example multiplicative dropout
/// masks on the output-layer input.
pub fn batch_loss<T: Scalar>(model: &AttentionModel<T>, batch: &[Example], masks: Option<&[Vec<T>]>) -> Result<T, NnError> {
    check_batch(model, batch, masks)?;
    let total: T = batch
        .iter()
        .enumerate()
        .map(|(i, ex)| model.example_loss(ex, masks.map(|m| m[i].as_slice()), T::one(), None))
        .sum();
    Ok(total / T::of(batch.len() as f64))
}

/// Mean loss and its exact gradient with respect to every trainable tensor.
pub fn gradients<T: Scalar>(
    model: &AttentionModel<T>,
    batch: &[Example],
    masks: Option<&[Vec<T>]>,
) -> Result<(T, ModelParams<T>), NnError> {
    check_batch(model, batch, masks)?;
    let scale = T::one() / T::of(batch.len() as f64);
    let mut grads = model.params.zeros_like();
    let mut total = T::zero();
    for (i, ex) in batch.iter().enumerate() {
        total += model.example_loss(ex, masks.map(|m| m[i].as_slice()), scale, Some(&mut grads));
    }
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::encode_words;
    use crate::nn::attention::attend;
    use crate::nn::gru::gru_step;

    fn small(arch: Architecture, seed: u64) -> AttentionModel<f64> {
        let config = ModelConfig {
            embed_dim: 4,
            hidden: 3,
            max_len: 10,
            architecture: arch,
            rng_seed: seed,
            ..ModelConfig::default()
        };
        let emb = EmbeddingTable::random(7, 4, 0.5, seed + 100);
        let mut m = AttentionModel::new(config, emb, 0).unwrap();
        // non-zero biases so the check also covers them
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for (name, t) in m.params.tensors_mut() {
            let s = if is_bias(&name) { 0.3 } else { 0.6 };
            for x in t.data_mut() {
                *x = rng.gen_range(-s..s);
            }
        }
        m
    }

    fn enc(ids: &[usize], max_len: usize) -> EncodedPost {
        let mut v = ids.to_vec();
        let n = v.len();
        v.resize(max_len, 0);
        EncodedPost {
            ids: v,
            true_length: n,
        }
    }

    #[test]
    fn zero_output_layer_gives_sigmoid_of_bias() {
        let mut m = small(Architecture::BiAttention, 1);
        m.params.out_w.fill(0.0);
        m.params.out_b.fill(0.0);
        assert_eq!(m.predict(&enc(&[2, 3], 5)).unwrap().p, 0.5);
        m.params.out_b.fill(1.5);
        let p = m.predict(&enc(&[2, 3], 5)).unwrap().p;
        assert!((p - 1.0 / (1.0 + (-1.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn prediction_composes_the_verified_pieces() {
        let m = small(Architecture::BiAttention, 2);
        let ids = [3, 5, 2];
        let xs: Vec<Vec<f64>> = ids.iter().map(|&i| m.params.embed_transform.matvec(m.embeddings.row(i))).collect();
        let mut hf = vec![vec![0.0; 3]];
        for x in &xs {
            let next = gru_step(&m.params.forward, x, hf.last().unwrap()).unwrap();
            hf.push(next);
        }
        let bp = m.params.backward.as_ref().unwrap();
        let mut hb = vec![vec![0.0; 3]];
        for x in xs.iter().rev() {
            let next = gru_step(bp, x, hb.last().unwrap()).unwrap();
            hb.push(next);
        }
        let hbi: Vec<Vec<f64>> = (0..3).map(|t| [hf[t + 1].clone(), hb[3 - t].clone()].concat()).collect();
        assert_eq!(m.encode_bi(&enc(&ids, 6)).unwrap(), hbi);
        let a = attend(m.params.attention.as_ref().unwrap(), &hbi).unwrap();
        let logit: f64 = m.params.out_w.data().iter().zip(&a.d).map(|(w, d)| w * d).sum::<f64>() + m.params.out_b.data()[0];
        let pred = m.predict(&enc(&ids, 6)).unwrap();
        assert!((pred.p - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-14);
        assert_eq!(pred.alphas.unwrap(), a.alphas);
    }

    #[test]
    fn forward_last_uses_the_final_state() {
        let m = small(Architecture::ForwardLast, 3);
        let pred = m.predict(&enc(&[4], 3)).unwrap();
        assert!(pred.alphas.is_none());
        let x = m.params.embed_transform.matvec(m.embeddings.row(4));
        let h = gru_step(&m.params.forward, &x, &[0.0; 3]).unwrap();
        let logit = dot(m.params.out_w.data(), &h) + m.params.out_b.data()[0];
        assert!((pred.p - logit.sigmoid()).abs() < 1e-15);
        assert!(matches!(m.encode_bi(&enc(&[4], 3)), Err(NnError::Architecture(_))));
    }

    #[test]
    fn length_one_and_padding() {
        let m = small(Architecture::BiAttention, 4);
        let h = m.encode_bi(&enc(&[5], 1)).unwrap();
        assert_eq!(h.len(), 1);
        let x = m.params.embed_transform.matvec(m.embeddings.row(5));
        let f = gru_step(&m.params.forward, &x, &[0.0; 3]).unwrap();
        let b = gru_step(m.params.backward.as_ref().unwrap(), &x, &[0.0; 3]).unwrap();
        assert_eq!(h[0], [f, b].concat());
        assert_eq!(m.encode_bi(&enc(&[1, 2, 3, 4, 5], 150)).unwrap().len(), 5);
        let short = m.predict(&enc(&[2, 6, 3], 3)).unwrap();
        let long = m.predict(&enc(&[2, 6, 3], 40)).unwrap();
        assert_eq!(short, long);
    }

    #[test]
    fn shared_direction_weights_mirror_under_reversal() {
        let mut m = small(Architecture::BiAttention, 5);
        m.params.backward = Some(m.params.forward.clone());
        let a = m.encode_bi(&enc(&[2, 3, 4, 6], 4)).unwrap();
        let b = m.encode_bi(&enc(&[6, 4, 3, 2], 4)).unwrap();
        for t in 0..4 {
            assert_eq!(a[t][..3], b[3 - t][3..]);
            assert_eq!(a[t][3..], b[3 - t][..3]);
        }
    }

    #[test]
    fn empty_and_out_of_range_input() {
        let m = small(Architecture::BiAttention, 6);
        assert!(matches!(m.predict(&enc(&[], 4)), Err(NnError::EmptyInput)));
        assert!(matches!(m.predict(&enc(&[99], 4)), Err(NnError::Dimension(_))));
    }

    #[test]
    fn loss_values() {
        assert!((loss(0.5, true, None, 0.0) - 2f64.ln()).abs() < 1e-15);
        // −ln 1e-12 at either end of the clamp
        let l: f64 = loss(0.0, true, None, 0.0);
        assert_eq!(l, -(1e-12f64).ln());
        let l: f64 = loss(1.0, false, None, 0.0);
        assert!(l.is_finite() && (l - 27.631).abs() < 1e-3);
        assert!(loss(1.0f64, true, None, 0.0) < 1e-11);
        let penalty = loss(0.5, true, Some(&[0.25; 4]), 1e-4) - 2f64.ln();
        assert!((penalty - 2.5e-5).abs() < 1e-15);
    }

    #[test]
    fn output_bias_gradient_is_p_minus_y() {
        let mut m = small(Architecture::ForwardLast, 7);
        m.params.out_w.fill(0.0);
        let batch = [Example {
            input: enc(&[2, 3], 2),
            label: true,
        }];
        let (_, g) = gradients(&m, &batch, None).unwrap();
        let p = m.predict(&batch[0].input).unwrap().p;
        assert!((g.out_b.data()[0] - (p - 1.0)).abs() < 1e-15);
        // nothing upstream influences the output when its weights are zero
        assert!(g.forward.w_z.data().iter().all(|&x| x == 0.0));
        assert!(g.embed_transform.data().iter().all(|&x| x == 0.0));
    }

    fn finite_difference_check(mut m: AttentionModel<f64>, batch: &[Example], masks: Option<&[Vec<f64>]>) {
        let (_, grads) = gradients(&m, batch, masks).unwrap();
        let analytic: Vec<(String, Vec<f64>)> =
            grads.tensors().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect();
        let eps = 1e-5;
        for (name, g) in analytic {
            for i in 0..g.len() {
                let bump = |m: &mut AttentionModel<f64>, delta: f64| {
                    let mut ts = m.params.tensors_mut();
                    let (_, t) = ts.iter_mut().find(|(n, _)| *n == name).unwrap();
                    t.data_mut()[i] += delta;
                };
                bump(&mut m, eps);
                let up = batch_loss(&m, batch, masks).unwrap();
                bump(&mut m, -2.0 * eps);
                let down = batch_loss(&m, batch, masks).unwrap();
                bump(&mut m, eps);
                let numeric = (up - down) / (2.0 * eps);
                let rel = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "{name}[{i}]: analytic {} numeric {numeric}", g[i]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, arch) in [(10, Architecture::BiAttention), (11, Architecture::ForwardLast)] {
            let mut m = small(arch, seed);
            m.config.attention_l2_lambda = 0.05;
            let batch = vec![
                Example {
                    input: enc(&[2, 3, 4, 5, 6, 1], 8),
                    label: true,
                },
                Example {
                    input: enc(&[6, 2], 8),
                    label: false,
                },
            ];
            let width = m.config.feature_dim();
            let masks: Vec<Vec<f64>> = (0..2)
                .map(|i| (0..width).map(|j| if (i + j) % 3 == 0 { 0.0 } else { 1.25 }).collect())
                .collect();
            finite_difference_check(m.clone(), &batch, None);
            finite_difference_check(m, &batch, Some(&masks));
        }
    }

    #[test]
    fn vocabulary_hash_is_enforced() {
        let vocab = crate::corpus::Vocabulary::from_counts([("a".to_string(), 1)], 1);
        let mut m = small(Architecture::BiAttention, 8);
        assert!(matches!(m.check_vocab(&vocab), Err(NnError::VocabMismatch { .. })));
        m.vocab_hash = vocab.content_hash();
        m.check_vocab(&vocab).unwrap();
        let e = encode_words(["a"], &vocab, 4);
        m.predict(&e).unwrap();
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for arch in [Architecture::BiAttention, Architecture::ForwardLast] {
            let m = small(arch, 9);
            let path = dir.path().join(format!("{arch}.rkt"));
            m.save_checkpoint(&path).unwrap();
            let back = AttentionModel::<f64>::load_checkpoint(&path).unwrap();
            assert_eq!(back, m);
            let e = enc(&[2, 4, 6], 5);
            assert_eq!(back.predict(&e).unwrap().p.to_bits(), m.predict(&e).unwrap().p.to_bits());
            let mut bytes = std::fs::read(&path).unwrap();
            bytes[1] = b'?';
            std::fs::write(&path, &bytes).unwrap();
            assert!(matches!(
                AttentionModel::<f64>::load_checkpoint(&path),
                Err(NnError::Checkpoint(CheckpointError::BadMagic(_)))
            ));
        }
    }

    #[test]
    fn checkpoint_shape_mismatch_is_an_error() {
        let m = small(Architecture::BiAttention, 12);
        let mut c = m.to_container();
        let t = c.tensors.iter_mut().find(|t| t.name == "output.w").unwrap();
        t.shape = vec![5];
        t.data.truncate(5);
        assert!(matches!(
            AttentionModel::<f64>::from_container(&c),
            Err(NnError::Checkpoint(CheckpointError::Shape { .. }))
        ));
    }
}
