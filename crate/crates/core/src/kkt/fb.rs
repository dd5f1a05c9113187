//! Smoothed Fischer-Burmeister complementarity function.

use crate::num::Real;

/// `psi(a, b, z) = sqrt(a^2 + b^2 + z^2) - a - b`.
///
/// With `z = 0` this is the classical Fischer-Burmeister function, zero
/// exactly when `a >= 0`, `b >= 0`, `a b = 0`. For `z > 0` the zero set is
/// the relaxed curve `a >= 0`, `b >= 0`, `a b = z^2 / 2`, and the function
/// is smooth everywhere.
#[inline]
pub fn fb<T: Real>(a: T, b: T, z: T) -> T {
    (a * a + b * b + z * z).sqrt() - a - b
}

/// Partial derivatives `(d psi / d a, d psi / d b)`.
///
/// At the nonsmooth origin (`a = b = z = 0`) the convention `(-1, -1)` is
/// returned, the center of the generalized gradient. Both components always
/// lie in `[-2, 0]`.
#[inline]
pub fn fb_grad<T: Real>(a: T, b: T, z: T) -> (T, T) {
    let r = (a * a + b * b + z * z).sqrt();
    if r == T::zero() {
        (-T::one(), -T::one())
    } else {
        (a / r - T::one(), b / r - T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fb_values() {
        assert_eq!(fb(0.0, 0.0, 0.0), 0.0);
        assert_eq!(fb(3.0, 4.0, 0.0), -2.0);
        assert_relative_eq!(fb(0.0, 0.0, 0.1), 0.1);
    }

    #[test]
    fn fb_grad_values() {
        assert_eq!(fb_grad(0.0, 0.0, 1.0), (-1.0, -1.0));
        assert_eq!(fb_grad(1.0, 0.0, 0.0), (0.0, -1.0));
        assert_eq!(fb_grad(0.0, 0.0, 0.0), (-1.0, -1.0));
    }

    #[test]
    fn fb_grad_range_random() {
        let mut state = 0x2545f4914f6cdd1d_u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) * 6.0 - 3.0
        };
        for _ in 0..1000 {
            let (a, b) = (next(), next());
            let z = next().abs();
            let (ga, gb) = fb_grad(a, b, z);
            assert!((-2.0..=0.0).contains(&ga), "ga={ga} at ({a},{b},{z})");
            assert!((-2.0..=0.0).contains(&gb), "gb={gb} at ({a},{b},{z})");
        }
    }
}
