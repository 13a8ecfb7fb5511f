use super::tensor::{axpy, dot, Tensor};
use super::NnError;
use crate::scalar::Scalar;

/// Scalar scoring layer `u_t = tanh(w · h_t + b)` over bidirectional states.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    /// Shape `[1, 2H]`.
    pub w: Tensor<T>,
    /// Shape `[1]`.
    pub b: Tensor<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn zeros(width: usize) -> Self {
        AttentionParams {
            w: Tensor::zeros(&[1, width]),
            b: Tensor::zeros(&[1]),
        }
    }

    pub fn width(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub alphas: Vec<T>,
    pub u: Vec<T>,
    /// `Σ α_t h_t`.
    pub d: Vec<T>,
}

/// Softmax with the maximum subtracted first.
pub fn softmax<T: Scalar>(u: &[T]) -> Vec<T> {
    let m = u.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = u.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn attend<T: Scalar>(p: &AttentionParams<T>, h: &[Vec<T>]) -> Result<Attention<T>, NnError> {
    if h.is_empty() {
        return Err(NnError::EmptyInput);
    }
    if let Some(bad) = h.iter().find(|v| v.len() != p.width()) {
        return Err(NnError::Dimension(format!(
            "attention expects states of width {}, got {}",
            p.width(),
            bad.len()
        )));
    }
    Ok(attend_unchecked(p, h))
}

pub(crate) fn attend_unchecked<T: Scalar>(p: &AttentionParams<T>, h: &[Vec<T>]) -> Attention<T> {
    let w = p.w.data();
    let b = p.b.data()[0];
    let u: Vec<T> = h.iter().map(|ht| (dot(w, ht) + b).tanh()).collect();
    let alphas = softmax(&u);
    let mut d = vec![T::zero(); p.width()];
    for (&a, ht) in alphas.iter().zip(h) {
        axpy(a, ht, &mut d);
    }
    Attention { alphas, u, d }
}

/// Backward pass given `g_d = ∂L/∂d` and a direct term `g_alpha_direct =
/// ∂L/∂α` (the penalty). Accumulates into `grad` and `g_h`.
pub(crate) fn attend_backward<T: Scalar>(
    p: &AttentionParams<T>,
    h: &[Vec<T>],
    att: &Attention<T>,
    g_d: &[T],
    g_alpha_direct: &[T],
    grad: &mut AttentionParams<T>,
    g_h: &mut [Vec<T>],
) {
    let g_alpha: Vec<T> = h
        .iter()
        .zip(g_alpha_direct)
        .map(|(ht, &extra)| dot(g_d, ht) + extra)
        .collect();
    let mean = dot(&att.alphas, &g_alpha);
    let w = p.w.data();
    for t in 0..h.len() {
        let a = att.alphas[t];
        axpy(a, g_d, &mut g_h[t]);
        let g_u = a * (g_alpha[t] - mean);
        let g_pre = g_u * (T::one() - att.u[t] * att.u[t]);
        axpy(g_pre, &h[t], grad.w.data_mut());
        grad.b.data_mut()[0] += g_pre;
        axpy(g_pre, w, &mut g_h[t]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_scores_give_uniform_weights() {
        let p = AttentionParams::<f64>::zeros(2);
        let h = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let a = attend(&p, &h).unwrap();
        for &x in &a.alphas {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((a.d[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_ln3_and_zero() {
        let a = softmax(&[3f64.ln(), 0.0]);
        assert!((a[0] - 0.75).abs() < 1e-15);
        assert!((a[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_scores() {
        let a = softmax(&[1000.0f64, 1000.0, -1000.0]);
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert_eq!(a[2], 0.0);
    }

    #[test]
    fn near_one_hot_weights_select_a_state() {
        // tanh caps u at 1, so a one-hot α needs d computed from fixed weights.
        let h = vec![vec![1.0, -1.0], vec![0.25, 0.5]];
        let alphas = [0.0, 1.0];
        let mut d = vec![0.0; 2];
        for (a, ht) in alphas.iter().zip(&h) {
            axpy(*a, ht, &mut d);
        }
        assert_eq!(d, h[1]);
    }

    #[test]
    fn errors() {
        let p = AttentionParams::<f64>::zeros(2);
        assert!(matches!(attend(&p, &[]), Err(NnError::EmptyInput)));
        assert!(matches!(attend(&p, &[vec![1.0]]), Err(NnError::Dimension(_))));
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution(
            w in proptest::collection::vec(-3.0f64..3.0, 4),
            b in -2.0f64..2.0,
            flat in proptest::collection::vec(-1.0f64..1.0, 4..40),
        ) {
            let p = AttentionParams {
                w: Tensor::from_vec(&[1, 4], w).unwrap(),
                b: Tensor::from_vec(&[1], vec![b]).unwrap(),
            };
            let h: Vec<Vec<f64>> = flat.chunks_exact(4).map(|c| c.to_vec()).collect();
            prop_assume!(!h.is_empty());
            let a = attend(&p, &h).unwrap();
            let s: f64 = a.alphas.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(a.alphas.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
