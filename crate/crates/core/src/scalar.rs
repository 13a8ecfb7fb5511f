//! Floating-point scalar abstraction used by the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type accepted by tensors, recurrent layers and the optimizer.
///
/// Implemented for `f32` and `f64`. Training and gradient checks are meant to
/// run in `f64`; `f32` is available for cheaper inference.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Copy
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and deserialization.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

macro_rules! scalar_impl {
    ($($t:ty)*) => ($(
        impl Scalar for $t {}
    )*)
}

scalar_impl!(f32 f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        assert_eq!(0.0f64.sigmoid(), 0.5);
        let a = 3.0f64.sigmoid();
        let b = (-3.0f64).sigmoid();
        assert!((a + b - 1.0).abs() < 1e-15);
        assert!((-1000.0f64).sigmoid().is_finite());
        assert_eq!(1000.0f32.sigmoid(), 1.0);
    }
}
