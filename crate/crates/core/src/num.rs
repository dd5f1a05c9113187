//! Scalar abstraction for the solver core.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the solver: `f32` or `f64`.
///
/// Bounds come from `nalgebra` (field operations, square roots, powers) plus
/// the `num_traits` conversions for moving literals and diagnostics between
/// the scalar type and `f64`.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert to the scalar type")
}

/// True if `x` is neither NaN nor infinite.
#[inline]
pub fn is_finite<T: Real>(x: T) -> bool {
    // NaN fails the self-comparison; infinities fail the range check.
    x == x && x < T::max_value().unwrap() && x > T::min_value().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_conversion_roundtrips() {
        assert_eq!(real::<f64>(0.7), 0.7);
        assert_eq!(real::<f32>(0.5), 0.5f32);
    }

    #[test]
    fn finiteness_detection() {
        assert!(is_finite(1.0f64));
        assert!(!is_finite(f64::NAN));
        assert!(!is_finite(f64::INFINITY));
        assert!(!is_finite(f64::NEG_INFINITY));
        assert!(is_finite(0.0f32));
        assert!(!is_finite(f32::NAN));
    }
}
