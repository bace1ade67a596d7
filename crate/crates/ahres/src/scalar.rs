//! Scalar abstraction shared by the generic numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point type accepted by the generic parts of the crate.
///
/// Implemented for `f32` and `f64`. Modules that depend on special functions
/// or long oscillatory quadratures work in `f64` only.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Converts to `f64` for reporting and fitting.
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// A tolerance that is meaningful at this precision: `max(requested, 64 ε)`.
    fn tol(requested: f64) -> Self {
        let floor = 64.0 * Self::epsilon().f64();
        Self::c(requested.max(floor))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm of a slice.
pub fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&a| a * a).sum::<T>().sqrt()
}

/// Dot product of two slices of equal length.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| p * q).sum()
}

/// Maximum absolute componentwise difference.
pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p - q).abs())
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_respects_precision() {
        assert_eq!(<f64 as Real>::tol(1e-11), 1e-11);
        assert!(<f32 as Real>::tol(1e-11) > 1e-6);
    }

    #[test]
    fn vector_helpers() {
        assert_eq!(norm(&[3.0_f64, 4.0]), 5.0);
        assert_eq!(dot(&[1.0_f32, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(max_abs_diff(&[1.0_f64, 2.0], &[1.5, 1.0]), 1.0);
    }
}
