use rand::Rng;

use super::tensor::Tensor;
use super::NnError;
use crate::scalar::Scalar;

/// Gated recurrent unit parameters.
///
/// `w_*` map the input (hidden × input), `u_*` map the previous state
/// (hidden × hidden). Gates: `z` update, `r` reset, `h` candidate state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(&[hidden, input]),
            w_r: Tensor::zeros(&[hidden, input]),
            w_h: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            u_h: Tensor::zeros(&[hidden, hidden]),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    /// Weights uniform in `(-scale, scale)`, biases zero.
    pub fn uniform<R: Rng>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        for t in [&mut p.w_z, &mut p.w_r, &mut p.w_h, &mut p.u_z, &mut p.u_r, &mut p.u_h] {
            for x in t.data_mut() {
                *x = T::of(rng.gen_range(-scale..scale));
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &Tensor<T>); 9] {
        [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 9] {
        [
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }

    fn check(&self, x: &[T], h_prev: &[T]) -> Result<(), NnError> {
        if x.len() != self.input_dim() || h_prev.len() != self.hidden_dim() {
            return Err(NnError::Dimension(format!(
                "gru step expects input {} and state {}, got {} and {}",
                self.input_dim(),
                self.hidden_dim(),
                x.len(),
                h_prev.len()
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache<T> {
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub cand: Vec<T>,
    pub h: Vec<T>,
}

pub(crate) fn step_cached<T: Scalar>(p: &GruParams<T>, x: &[T], h_prev: &[T]) -> StepCache<T> {
    let hdim = p.hidden_dim();
    let mut z = p.w_z.matvec(x);
    let mut r = p.w_r.matvec(x);
    let mut a_h = p.w_h.matvec(x);
    let uz = p.u_z.matvec(h_prev);
    let ur = p.u_r.matvec(h_prev);
    for i in 0..hdim {
        z[i] = (z[i] + uz[i] + p.b_z.data()[i]).sigmoid();
        r[i] = (r[i] + ur[i] + p.b_r.data()[i]).sigmoid();
    }
    let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
    let uh = p.u_h.matvec(&rh);
    let mut cand = vec![T::zero(); hdim];
    let mut h = vec![T::zero(); hdim];
    for i in 0..hdim {
        a_h[i] += uh[i] + p.b_h.data()[i];
        cand[i] = a_h[i].tanh();
        h[i] = (T::one() - z[i]) * h_prev[i] + z[i] * cand[i];
    }
    StepCache {
        h_prev: h_prev.to_vec(),
        z,
        r,
        cand,
        h,
    }
}

/// One recurrence step: `h = (1 − z) ⊙ h_prev + z ⊙ tanh(W x + U (r ⊙ h_prev) + b)`.
pub fn gru_step<T: Scalar>(p: &GruParams<T>, x: &[T], h_prev: &[T]) -> Result<Vec<T>, NnError> {
    p.check(x, h_prev)?;
    Ok(step_cached(p, x, h_prev).h)
}

/// Backpropagates `g_h` (gradient w.r.t. this step's output) through one step.
/// Accumulates parameter gradients into `grad`, input gradient into `g_x`, and
/// returns the gradient w.r.t. `h_prev`.
pub(crate) fn step_backward<T: Scalar>(
    p: &GruParams<T>,
    cache: &StepCache<T>,
    x: &[T],
    g_h: &[T],
    grad: &mut GruParams<T>,
    g_x: &mut [T],
) -> Vec<T> {
    let hdim = p.hidden_dim();
    let one = T::one();
    let mut g_prev: Vec<T> = (0..hdim).map(|i| g_h[i] * (one - cache.z[i])).collect();

    // candidate branch
    let g_ah: Vec<T> = (0..hdim)
        .map(|i| g_h[i] * cache.z[i] * (one - cache.cand[i] * cache.cand[i]))
        .collect();
    let rh: Vec<T> = cache.r.iter().zip(&cache.h_prev).map(|(&a, &b)| a * b).collect();
    grad.w_h.outer_acc(&g_ah, x);
    grad.u_h.outer_acc(&g_ah, &rh);
    add_into(grad.b_h.data_mut(), &g_ah);
    p.w_h.matvec_t_acc(&g_ah, g_x);
    let mut g_rh = vec![T::zero(); hdim];
    p.u_h.matvec_t_acc(&g_ah, &mut g_rh);
    for i in 0..hdim {
        g_prev[i] += g_rh[i] * cache.r[i];
    }

    // reset gate
    let g_ar: Vec<T> = (0..hdim)
        .map(|i| g_rh[i] * cache.h_prev[i] * cache.r[i] * (one - cache.r[i]))
        .collect();
    grad.w_r.outer_acc(&g_ar, x);
    grad.u_r.outer_acc(&g_ar, &cache.h_prev);
    add_into(grad.b_r.data_mut(), &g_ar);
    p.w_r.matvec_t_acc(&g_ar, g_x);
    p.u_r.matvec_t_acc(&g_ar, &mut g_prev);

    // update gate
    let g_az: Vec<T> = (0..hdim)
        .map(|i| g_h[i] * (cache.cand[i] - cache.h_prev[i]) * cache.z[i] * (one - cache.z[i]))
        .collect();
    grad.w_z.outer_acc(&g_az, x);
    grad.u_z.outer_acc(&g_az, &cache.h_prev);
    add_into(grad.b_z.data_mut(), &g_az);
    p.w_z.matvec_t_acc(&g_az, g_x);
    p.u_z.matvec_t_acc(&g_az, &mut g_prev);

    g_prev
}

fn add_into<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_state() {
        let p = GruParams::<f64>::zeros(3, 2);
        assert_eq!(gru_step(&p, &[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::<f64>::zeros(3, 2);
        let h = gru_step(&p, &[1.0, -2.0, 0.5], &[0.4, -0.8]).unwrap();
        assert_eq!(h, vec![0.2, -0.4]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = GruParams::<f64>::zeros(3, 2);
        assert!(matches!(gru_step(&p, &[1.0], &[0.0, 0.0]), Err(NnError::Dimension(_))));
    }

    /// Scalar-by-scalar evaluation of the four gate equations, written
    /// without the tensor helpers.
    fn hand_step(p: &GruParams<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let at = |t: &Tensor<f64>, i: usize, j: usize| t.data()[i * t.cols() + j];
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 0..n {
            let mut az = p.b_z.data()[i];
            let mut ar = p.b_r.data()[i];
            for j in 0..x.len() {
                az += at(&p.w_z, i, j) * x[j];
                ar += at(&p.w_r, i, j) * x[j];
            }
            for j in 0..n {
                az += at(&p.u_z, i, j) * h[j];
                ar += at(&p.u_r, i, j) * h[j];
            }
            z[i] = sig(az);
            r[i] = sig(ar);
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut a = p.b_h.data()[i];
            for j in 0..x.len() {
                a += at(&p.w_h, i, j) * x[j];
            }
            for j in 0..n {
                a += at(&p.u_h, i, j) * r[j] * h[j];
            }
            out[i] = (1.0 - z[i]) * h[i] + z[i] * a.tanh();
        }
        out
    }

    #[test]
    fn random_three_dim_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = GruParams::<f64>::uniform(3, 3, 0.9, &mut rng);
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
            for v in b.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let x = [0.3, -1.2, 0.7];
        let h = [0.1, -0.5, 0.9];
        let got = gru_step(&p, &x, &h).unwrap();
        let want = hand_step(&p, &x, &h);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn f32_step_agrees_with_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = GruParams::<f64>::uniform(4, 3, 0.5, &mut rng);
        let p32 = GruParams::<f32> {
            w_z: p.w_z.cast(),
            w_r: p.w_r.cast(),
            w_h: p.w_h.cast(),
            u_z: p.u_z.cast(),
            u_r: p.u_r.cast(),
            u_h: p.u_h.cast(),
            b_z: p.b_z.cast(),
            b_r: p.b_r.cast(),
            b_h: p.b_h.cast(),
        };
        let h64 = gru_step(&p, &[0.1, 0.2, 0.3, 0.4], &[0.5, -0.5, 0.0]).unwrap();
        let h32 = gru_step(&p32, &[0.1, 0.2, 0.3, 0.4], &[0.5, -0.5, 0.0]).unwrap();
        for (a, b) in h64.iter().zip(&h32) {
            assert!((a - f64::from(*b)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn state_stays_inside_unit_box(
            seed in any::<u64>(),
            h in proptest::collection::vec(-0.999f64..0.999, 4),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // pre-activations stay well below where tanh rounds to exactly 1
            let p = GruParams::<f64>::uniform(3, 4, 1.0, &mut rng);
            let out = gru_step(&p, &x, &h).unwrap();
            prop_assert!(out.iter().all(|v| v.abs() < 1.0));
        }
    }
}
