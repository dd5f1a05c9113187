//! Relaxed reformulation of the box-constrained variational inequality.
//!
//! Each component pair `(p_i, w_i)` of the equilibrium variable must satisfy
//! a disjunctive switch-case condition over the box `[l_i, u_i]`. The relaxed
//! inequality system replaces the bilinear complementarity products with
//! perturbed versions controlled by a nonnegative parameter `s`:
//!
//! ```text
//! both bounds finite:   [p - l,  u - p,  s - (p - l) w,  s + (u - p) w]
//! only l finite:        [p - l,  w,      s - (p - l) w]
//! only u finite:        [u - p,  -w,     s + (u - p) w]
//! neither finite:       (no rows)
//! ```
//!
//! Component ordering is fixed: ascending `i`, rows in the order listed.

use nalgebra::{DMatrix, DVector};

use crate::num::Real;
use crate::{BoundData, Error, Result};

/// Number of relaxed-equilibrium rows a single component contributes.
pub fn component_rows<T: Real>(l: Option<T>, u: Option<T>) -> usize {
    match (l, u) {
        (Some(_), Some(_)) => 4,
        (Some(_), None) | (None, Some(_)) => 3,
        (None, None) => 0,
    }
}

/// Total row count of the relaxed system for the given bounds.
pub fn gamma_rows<T: Real>(bounds: &BoundData<T>) -> usize {
    (0..bounds.len())
        .map(|i| component_rows(bounds.lower(i), bounds.upper(i)))
        .sum()
}

fn check_lengths<T: Real>(p: &[T], w: &[T], bounds: &BoundData<T>) -> Result<()> {
    if p.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            context: "scholtes p",
            expected: bounds.len(),
            actual: p.len(),
        });
    }
    if w.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            context: "scholtes w",
            expected: bounds.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// Evaluates the relaxed equilibrium constraint vector.
pub fn build_scholtes_phi<T: Real>(
    p: &[T],
    w: &[T],
    s: T,
    bounds: &BoundData<T>,
) -> Result<DVector<T>> {
    if s < T::zero() {
        return Err(Error::NegativeRelaxation {
            value: num_traits::ToPrimitive::to_f64(&s).unwrap_or(f64::NAN),
        });
    }
    check_lengths(p, w, bounds)?;
    let mut rows = Vec::with_capacity(gamma_rows(bounds));
    for i in 0..bounds.len() {
        match (bounds.lower(i), bounds.upper(i)) {
            (Some(l), Some(u)) => {
                rows.push(p[i] - l);
                rows.push(u - p[i]);
                rows.push(s - (p[i] - l) * w[i]);
                rows.push(s + (u - p[i]) * w[i]);
            }
            (Some(l), None) => {
                rows.push(p[i] - l);
                rows.push(w[i]);
                rows.push(s - (p[i] - l) * w[i]);
            }
            (None, Some(u)) => {
                rows.push(u - p[i]);
                rows.push(-w[i]);
                rows.push(s + (u - p[i]) * w[i]);
            }
            (None, None) => {}
        }
    }
    Ok(DVector::from_vec(rows))
}

/// Exact Jacobian of [`build_scholtes_phi`] with respect to `(p, w)`.
///
/// Returns an `n_gamma x 2 n_p` matrix; the first `n_p` columns differentiate
/// with respect to `p`, the remaining ones with respect to `w`. The relaxation
/// parameter enters the rows only additively, so the Jacobian is independent
/// of `s`.
pub fn build_scholtes_jacobian<T: Real>(
    p: &[T],
    w: &[T],
    bounds: &BoundData<T>,
) -> Result<DMatrix<T>> {
    check_lengths(p, w, bounds)?;
    let n_p = bounds.len();
    let n_gamma = gamma_rows(bounds);
    let mut jac = DMatrix::zeros(n_gamma, 2 * n_p);
    let one = T::one();
    let mut r = 0;
    for i in 0..n_p {
        match (bounds.lower(i), bounds.upper(i)) {
            (Some(l), Some(u)) => {
                jac[(r, i)] = one;
                jac[(r + 1, i)] = -one;
                jac[(r + 2, i)] = -w[i];
                jac[(r + 2, n_p + i)] = -(p[i] - l);
                jac[(r + 3, i)] = -w[i];
                jac[(r + 3, n_p + i)] = u - p[i];
                r += 4;
            }
            (Some(l), None) => {
                jac[(r, i)] = one;
                jac[(r + 1, n_p + i)] = one;
                jac[(r + 2, i)] = -w[i];
                jac[(r + 2, n_p + i)] = -(p[i] - l);
                r += 3;
            }
            (None, Some(u)) => {
                jac[(r, i)] = -one;
                jac[(r + 1, n_p + i)] = -one;
                jac[(r + 2, i)] = -w[i];
                jac[(r + 2, n_p + i)] = u - p[i];
                r += 3;
            }
            (None, None) => {}
        }
    }
    Ok(jac)
}

/// Coefficients of the `gamma`-weighted second derivative of the relaxed
/// constraint rows.
///
/// Every row of the relaxed system is at most bilinear in `(p_i, w_i)`, so
/// the weighted Hessian `-sum_r gamma_r  d2 Phi_r` reduces to one symmetric
/// cross term per component. Returned is the coefficient to add at positions
/// `(p_i, w_i)` and `(w_i, p_i)` of the Hamiltonian Hessian.
pub fn scholtes_cross_coefficients<T: Real>(gamma: &[T], bounds: &BoundData<T>) -> Result<DVector<T>> {
    let n_gamma = gamma_rows(bounds);
    if gamma.len() != n_gamma {
        return Err(Error::DimensionMismatch {
            context: "scholtes gamma",
            expected: n_gamma,
            actual: gamma.len(),
        });
    }
    let mut coeff = DVector::zeros(bounds.len());
    let mut r = 0;
    for i in 0..bounds.len() {
        match (bounds.lower(i), bounds.upper(i)) {
            (Some(_), Some(_)) => {
                // rows r+2 and r+3 carry the bilinear terms, each with
                // cross derivative -1.
                coeff[i] = gamma[r + 2] + gamma[r + 3];
                r += 4;
            }
            (Some(_), None) | (None, Some(_)) => {
                coeff[i] = gamma[r + 2];
                r += 3;
            }
            (None, None) => {}
        }
    }
    Ok(coeff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::fd;
    use approx::assert_relative_eq;

    fn both(l: f64, u: f64) -> BoundData<f64> {
        BoundData::new(vec![Some(l)], vec![Some(u)]).unwrap()
    }

    fn ncp() -> BoundData<f64> {
        BoundData::new(vec![Some(0.0)], vec![None]).unwrap()
    }

    #[test]
    fn quadruple_for_finite_box() {
        let phi = build_scholtes_phi(&[0.0], &[0.0], 0.01, &both(-1.0, 1.0)).unwrap();
        assert_eq!(phi.as_slice(), &[1.0, 1.0, 0.01, 0.01]);
    }

    #[test]
    fn triple_for_ncp() {
        let phi = build_scholtes_phi(&[0.5], &[0.2], 0.0, &ncp()).unwrap();
        assert_relative_eq!(phi[0], 0.5);
        assert_relative_eq!(phi[1], 0.2);
        assert_relative_eq!(phi[2], -0.1);
    }

    #[test]
    fn boundary_mode_at_lower() {
        let phi = build_scholtes_phi(&[0.0], &[3.0], 0.0, &ncp()).unwrap();
        assert_eq!(phi.as_slice(), &[0.0, 3.0, 0.0]);
    }

    #[test]
    fn upper_only_reduction() {
        let bounds = BoundData::new(vec![None], vec![Some(2.0)]).unwrap();
        let phi = build_scholtes_phi(&[0.5], &[-0.4], 0.1, &bounds).unwrap();
        assert_relative_eq!(phi[0], 1.5);
        assert_relative_eq!(phi[1], 0.4);
        assert_relative_eq!(phi[2], 0.1 + 1.5 * (-0.4));
    }

    #[test]
    fn negative_s_rejected() {
        assert!(build_scholtes_phi(&[0.0], &[0.0], -1e-9, &both(-1.0, 1.0)).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(build_scholtes_phi(&[0.0, 1.0], &[0.0], 0.0, &both(-1.0, 1.0)).is_err());
        assert!(build_scholtes_jacobian(&[0.0], &[0.0, 1.0], &both(-1.0, 1.0)).is_err());
    }

    #[test]
    fn jacobian_finite_box_at_origin() {
        let jac = build_scholtes_jacobian(&[0.0], &[0.0], &both(-1.0, 1.0)).unwrap();
        let expect = [[1.0, 0.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];
        for (r, row) in expect.iter().enumerate() {
            assert_eq!(jac[(r, 0)], row[0]);
            assert_eq!(jac[(r, 1)], row[1]);
        }
    }

    #[test]
    fn jacobian_ncp_rows() {
        let jac = build_scholtes_jacobian(&[1.0], &[1.0], &ncp()).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];
        for (r, row) in expect.iter().enumerate() {
            assert_eq!(jac[(r, 0)], row[0]);
            assert_eq!(jac[(r, 1)], row[1]);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let bounds = BoundData::new(
            vec![Some(-1.0), Some(0.0), None, None],
            vec![Some(1.0), None, Some(2.0), None],
        )
        .unwrap();
        let p = [0.3, 0.7, -0.2, 0.9];
        let w = [-0.5, 0.4, 1.1, -0.3];
        let jac = build_scholtes_jacobian(&p, &w, &bounds).unwrap();
        let f = |v: &[f64]| build_scholtes_phi(&v[0..4], &v[4..8], 0.37, &bounds).unwrap();
        let mut point = Vec::new();
        point.extend_from_slice(&p);
        point.extend_from_slice(&w);
        let fd_jac = fd::fd_jacobian(&f, &point, 1e-7);
        for r in 0..jac.nrows() {
            for c in 0..jac.ncols() {
                assert_relative_eq!(jac[(r, c)], fd_jac[(r, c)], epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_independent_of_s() {
        let bounds = both(-1.0, 1.0);
        let j0 = build_scholtes_jacobian(&[0.2], &[0.5], &bounds).unwrap();
        let phi0 = build_scholtes_phi(&[0.2], &[0.5], 0.0, &bounds).unwrap();
        let phi1 = build_scholtes_phi(&[0.2], &[0.5], 1.0, &bounds).unwrap();
        // rows shift only by the additive s in the bilinear rows
        assert_relative_eq!(phi1[2] - phi0[2], 1.0);
        assert_relative_eq!(phi1[3] - phi0[3], 1.0);
        let j1 = build_scholtes_jacobian(&[0.2], &[0.5], &bounds).unwrap();
        assert_eq!(j0, j1);
    }

    #[test]
    fn row_count_rule() {
        let bounds = BoundData::new(
            vec![Some(-1.0), Some(0.0), None, None],
            vec![Some(1.0), None, Some(2.0), None],
        )
        .unwrap();
        assert_eq!(gamma_rows(&bounds), 4 + 3 + 3 + 0);
        let phi = build_scholtes_phi(&[0.0; 4], &[0.0; 4], 0.1, &bounds).unwrap();
        assert_eq!(phi.len(), gamma_rows(&bounds));
    }

    #[test]
    fn nonnegative_at_zero_s_iff_switch_case_holds() {
        // grid over p (including the bounds) and w, single finite box [-1, 1]
        let bounds = both(-1.0, 1.0);
        let p_grid = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
        let w_grid = [-2.0, -0.7, 0.0, 0.7, 2.0];
        for &p in &p_grid {
            for &w in &w_grid {
                let phi = build_scholtes_phi(&[p], &[w], 0.0, &bounds).unwrap();
                let all_nonneg = phi.iter().all(|&v| v >= 0.0);
                let switch_case = if p == -1.0 {
                    w >= 0.0
                } else if p == 1.0 {
                    w <= 0.0
                } else if p > -1.0 && p < 1.0 {
                    w == 0.0
                } else {
                    false
                };
                assert_eq!(all_nonneg, switch_case, "p={p} w={w} phi={phi:?}");
            }
        }
    }

    #[test]
    fn cross_coefficients_sum_bilinear_rows() {
        let bounds = BoundData::new(vec![Some(-1.0), Some(0.0)], vec![Some(1.0), None]).unwrap();
        let gamma = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let coeff = scholtes_cross_coefficients(&gamma, &bounds).unwrap();
        assert_eq!(coeff.as_slice(), &[3.0 + 4.0, 7.0]);
    }
}
