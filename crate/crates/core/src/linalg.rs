//! Small dense solvers.

use crate::scalar::Scalar;

/// In-place Cholesky factorization of a symmetric positive-definite
/// row-major `n × n` matrix; the lower triangle receives `L` with `A = L Lᵀ`.
/// Returns `None` when a pivot is not positive.
pub fn cholesky<T: Scalar>(a: &mut [T], n: usize) -> Option<()> {
    assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

/// Solves `A x = b` for SPD `A` (consumed as scratch space).
pub fn solve_spd<T: Scalar>(mut a: Vec<T>, b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    cholesky(&mut a, n)?;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let l = a[i * n + k];
            let yk = y[k];
            y[i] -= l * yk;
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let l = a[k * n + i];
            let yk = y[k];
            y[i] -= l * yk;
        }
        y[i] /= a[i * n + i];
    }
    Some(y)
}

/// Result of [`weighted_ridge`].
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit<T> {
    pub coef: Vec<T>,
    pub intercept: T,
    /// Weighted coefficient of determination; 0 when the targets are constant.
    pub r2: T,
}

/// Minimizes `Σ wᵢ (yᵢ − b − xᵢ·β)² + l2 ‖β‖²` with an unpenalized
/// intercept `b`. `x` is row-major `n × p`.
pub fn weighted_ridge<T: Scalar>(x: &[T], y: &[T], w: &[T], p: usize, l2: T) -> Option<RidgeFit<T>> {
    let n = y.len();
    assert_eq!(x.len(), n * p);
    assert_eq!(w.len(), n);
    let wsum: T = w.iter().copied().sum();
    if !(wsum > T::zero()) {
        return None;
    }
    // exact centering for constant targets, so every coefficient is exactly 0
    let y_mean = if y.iter().all(|&v| v == y[0]) {
        y[0]
    } else {
        w.iter().zip(y).map(|(&wi, &yi)| wi * yi).sum::<T>() / wsum
    };
    let mut x_mean = vec![T::zero(); p];
    for i in 0..n {
        for j in 0..p {
            x_mean[j] += w[i] * x[i * p + j];
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= wsum);

    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    let mut xc = vec![T::zero(); p];
    for i in 0..n {
        for j in 0..p {
            xc[j] = x[i * p + j] - x_mean[j];
        }
        let yc = y[i] - y_mean;
        for j in 0..p {
            let wx = w[i] * xc[j];
            rhs[j] += wx * yc;
            for k in 0..=j {
                gram[j * p + k] += wx * xc[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[k * p + j] = gram[j * p + k];
        }
        gram[j * p + j] += l2;
    }
    let coef = if p == 0 { Vec::new() } else { solve_spd(gram, &rhs)? };
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(&c, &m)| c * m).sum::<T>();

    let (mut ss_res, mut ss_tot) = (T::zero(), T::zero());
    for i in 0..n {
        let fit = intercept + (0..p).map(|j| coef[j] * x[i * p + j]).sum::<T>();
        ss_res += w[i] * (y[i] - fit) * (y[i] - fit);
        ss_tot += w[i] * (y[i] - y_mean) * (y[i] - y_mean);
    }
    let r2 = if ss_tot > T::of(1e-300) { T::one() - ss_res / ss_tot } else { T::zero() };
    Some(RidgeFit { coef, intercept, r2 })
}
