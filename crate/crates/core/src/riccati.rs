//! Block-tridiagonal KKT solve by backward elimination and forward
//! substitution.
//!
//! The backward pass reduces stage `n` to `A_n = J_n - B_U A_{n+1}^{-1} B_L`
//! and `b_n = T_n - B_U A_{n+1}^{-1} b_{n+1}`; the forward pass applies
//! `dY_n = -A_n^{-1} (b_n + B_L dY_{n-1})` with a zero phantom stage in
//! front. Because the couplers contain a single identity block, the
//! correction term touches only the `(x, x)` corner of the primal block and
//! needs just the `(lambda, lambda)` sub-block of `A_{n+1}^{-1}`.
//!
//! Stage factorizations are kept so that a second right-hand side (the
//! second-order correction) costs one backward and one forward recursion
//! without refactoring.

use nalgebra::linalg::{LU, SymmetricEigen};
use nalgebra::{DMatrix, DVector, Dyn};

use crate::kkt::{KktMatrix, KktResidual};
use crate::num::{real, Real};
use crate::problem::Dimensions;
use crate::{Error, Result};

/// Condition-estimate threshold above which a reduced block is declared
/// numerically singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e14;

/// First trial value of the curvature correction when the previous iteration
/// needed none.
pub const SHIFT_INIT: f64 = 1e-4;
/// Shrink factor applied to a previously successful correction.
pub const SHIFT_DECREASE: f64 = 1.0 / 3.0;
/// Growth factor between correction attempts.
pub const SHIFT_INCREASE: f64 = 10.0;
/// Smallest nonzero correction tried.
pub const SHIFT_MIN: f64 = 1e-6;
/// Largest correction tried before giving up.
pub const SHIFT_MAX: f64 = 1e8;

/// Per-stage factorizations of the reduced blocks, reusable for additional
/// right-hand sides. Immutable after creation.
pub struct StageFactorization<T: Real> {
    lus: Vec<LU<T, Dyn, Dyn>>,
    dims: Dimensions<T>,
}

impl<T: Real> std::fmt::Debug for StageFactorization<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageFactorization")
            .field("stages", &self.lus.len())
            .finish()
    }
}

fn check_condition<T: Real>(lu: &LU<T, Dyn, Dyn>, stage: usize) -> Result<()> {
    let diag = lu.u().diagonal();
    let mut min = T::max_value().unwrap();
    let mut max = T::zero();
    for &d in diag.iter() {
        let a = d.abs();
        min = min.min(a);
        max = max.max(a);
    }
    let threshold = real::<T>(SINGULARITY_THRESHOLD);
    if min == T::zero() || max > min * threshold {
        let cond = if min == T::zero() {
            f64::INFINITY
        } else {
            (max / min).to_f64().unwrap_or(f64::INFINITY)
        };
        return Err(Error::SingularStageBlock { stage, cond });
    }
    Ok(())
}

fn solve_with<T: Real>(lu: &LU<T, Dyn, Dyn>, rhs: &DVector<T>, stage: usize) -> Result<DVector<T>> {
    lu.solve(rhs).ok_or(Error::SingularStageBlock {
        stage,
        cond: f64::INFINITY,
    })
}

impl<T: Real> StageFactorization<T> {
    /// Solves the factored system for a new right-hand side.
    pub fn resolve(&self, rhs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        let d = &self.dims;
        let n_stages = self.lus.len();
        if rhs.len() != n_stages {
            return Err(Error::DimensionMismatch {
                context: "resolve right-hand side",
                expected: n_stages,
                actual: rhs.len(),
            });
        }
        let mut reduced: Vec<DVector<T>> = rhs.to_vec();
        for n in (0..n_stages.saturating_sub(1)).rev() {
            let v = solve_with(&self.lus[n + 1], &reduced[n + 1], n + 1)?;
            for j in 0..d.n_x {
                let delta = v[d.o_lambda() + j];
                reduced[n][d.o_z() + j] -= delta;
            }
        }
        let mut direction: Vec<DVector<T>> = Vec::with_capacity(n_stages);
        for n in 0..n_stages {
            let mut rhs_n = reduced[n].clone();
            if n > 0 {
                let prev = &direction[n - 1];
                for j in 0..d.n_x {
                    rhs_n[d.o_lambda() + j] += prev[d.o_z() + j];
                }
            }
            let mut sol = solve_with(&self.lus[n], &rhs_n, n)?;
            sol.neg_mut();
            direction.push(sol);
        }
        Ok(direction)
    }
}

/// Checks that a reduced block has the saddle-point inertia: as many
/// positive eigenvalues as primal variables, the rest negative, none zero.
fn inertia_ok<T: Real>(a_n: &DMatrix<T>, dims: &Dimensions<T>) -> bool {
    let eig = SymmetricEigen::new(a_n.clone());
    let mut max_abs = T::zero();
    for &v in eig.eigenvalues.iter() {
        max_abs = max_abs.max(v.abs());
    }
    let zero_tol = max_abs * real::<T>(1e-14);
    let mut pos = 0;
    let mut neg = 0;
    for &v in eig.eigenvalues.iter() {
        if v > zero_tol {
            pos += 1;
        } else if v < -zero_tol {
            neg += 1;
        } else {
            return false;
        }
    }
    pos == dims.n_z() && neg == dims.n_y() - dims.n_z()
}

fn factor_blocks<T: Real>(
    kkt: &KktMatrix<T>,
    use_fast_correction: bool,
    check_inertia: bool,
) -> Result<(Vec<LU<T, Dyn, Dyn>>, bool)> {
    let d = &kkt.dims;
    let n_stages = kkt.blocks.len();
    let mut lus: Vec<Option<LU<T, Dyn, Dyn>>> = (0..n_stages).map(|_| None).collect();
    let mut inertia = true;
    for n in (0..n_stages).rev() {
        let mut a_n = kkt.blocks[n].clone();
        if n + 1 < n_stages {
            let next = lus[n + 1].as_ref().unwrap();
            if use_fast_correction {
                // Only the (lambda, lambda) sub-block of the inverse is needed.
                let mut unit = DVector::zeros(d.n_y());
                for i in 0..d.n_x {
                    unit.fill(T::zero());
                    unit[d.o_lambda() + i] = T::one();
                    let col = solve_with(next, &unit, n + 1)?;
                    for j in 0..d.n_x {
                        a_n[(d.o_z() + j, d.o_z() + i)] -= col[d.o_lambda() + j];
                    }
                }
            } else {
                // Reference path: form A_{n+1}^{-1} B_L column by column.
                let mut b_l = DMatrix::zeros(d.n_y(), d.n_y());
                for i in 0..d.n_x {
                    b_l[(d.o_lambda() + i, d.o_z() + i)] = T::one();
                }
                let m = next.solve(&b_l).ok_or(Error::SingularStageBlock {
                    stage: n + 1,
                    cond: f64::INFINITY,
                })?;
                for j in 0..d.n_x {
                    // row o_z + j of B_U * M is row o_lambda + j of M
                    for c in 0..d.n_y() {
                        a_n[(d.o_z() + j, c)] -= m[(d.o_lambda() + j, c)];
                    }
                }
            }
        }
        if check_inertia && inertia {
            inertia = inertia_ok(&a_n, d);
        }
        let lu = a_n.lu();
        check_condition(&lu, n)?;
        lus[n] = Some(lu);
    }
    Ok((lus.into_iter().map(Option::unwrap).collect(), inertia))
}

/// Factors the block-tridiagonal system and solves `K dY = -T`.
pub fn factor_and_solve<T: Real>(
    kkt: &KktMatrix<T>,
    rhs: &KktResidual<T>,
) -> Result<(Vec<DVector<T>>, StageFactorization<T>)> {
    let (lus, _) = factor_blocks(kkt, true, false)?;
    let fact = StageFactorization {
        lus,
        dims: kkt.dims.clone(),
    };
    let direction = fact.resolve(&rhs.stages)?;
    Ok((direction, fact))
}

/// Reference implementation of the backward correction that solves against
/// the full coupler matrix. Kept as the oracle for the structural shortcut.
pub fn factor_and_solve_reference<T: Real>(
    kkt: &KktMatrix<T>,
    rhs: &KktResidual<T>,
) -> Result<(Vec<DVector<T>>, StageFactorization<T>)> {
    let (lus, _) = factor_blocks(kkt, false, false)?;
    let fact = StageFactorization {
        lus,
        dims: kkt.dims.clone(),
    };
    let direction = fact.resolve(&rhs.stages)?;
    Ok((direction, fact))
}

/// A Newton step with its factorization and curvature-correction telemetry.
pub struct NewtonStep<T: Real> {
    pub direction: Vec<DVector<T>>,
    pub factorization: StageFactorization<T>,
    /// Diagonal shift added to the Hamiltonian Hessian block to restore the
    /// saddle-point inertia; zero whenever the unmodified system is sound.
    pub hessian_shift: T,
    /// Factorization attempts consumed.
    pub factorizations: usize,
}

/// Adds `delta` to the primal-block diagonal of every stage matrix.
pub fn apply_hessian_shift<T: Real>(kkt: &mut KktMatrix<T>, delta: T) {
    let (o_z, n_y) = (kkt.dims.o_z(), kkt.dims.n_y());
    for b in kkt.blocks.iter_mut() {
        for i in o_z..n_y {
            b[(i, i)] += delta;
        }
    }
}

/// Computes the Newton direction, correcting the curvature when a reduced
/// block has the wrong inertia.
///
/// Reduced blocks inherit symmetry from the diagonal blocks, so their
/// eigenvalue signs decide whether the step is a descent-compatible saddle
/// solution: exactly `n_Z` positive directions per stage. If not, a diagonal
/// shift on the Hamiltonian Hessian is increased geometrically until the
/// inertia is restored. `previous_shift` seeds the schedule so that
/// consecutive corrections stay cheap; near a regular solution the first,
/// shift-free attempt succeeds and the step is the exact Newton step.
///
/// The matrix is returned with the accepted shift applied.
pub fn solve_newton_step<T: Real>(
    kkt: &mut KktMatrix<T>,
    rhs: &KktResidual<T>,
    previous_shift: T,
) -> Result<NewtonStep<T>> {
    let mut applied = T::zero();
    let mut factorizations = 0;
    let mut next_shift = if previous_shift > T::zero() {
        (previous_shift * real(SHIFT_DECREASE)).max(real(SHIFT_MIN))
    } else {
        real(SHIFT_INIT)
    };
    let mut trial = T::zero();
    loop {
        apply_hessian_shift(kkt, trial - applied);
        applied = trial;
        factorizations += 1;
        match factor_blocks(kkt, true, true) {
            Ok((lus, true)) => {
                let fact = StageFactorization {
                    lus,
                    dims: kkt.dims.clone(),
                };
                let direction = fact.resolve(&rhs.stages)?;
                return Ok(NewtonStep {
                    direction,
                    factorization: fact,
                    hessian_shift: applied,
                    factorizations,
                });
            }
            Ok((_, false)) | Err(Error::SingularStageBlock { .. }) => {
                if trial >= real(SHIFT_MAX) {
                    return Err(Error::SingularStageBlock {
                        stage: 0,
                        cond: f64::INFINITY,
                    });
                }
                trial = if trial == T::zero() {
                    next_shift
                } else {
                    trial * real(SHIFT_INCREASE)
                };
                next_shift = trial;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Applies the block-tridiagonal matrix to a stage-wise vector.
///
/// Used by tests to verify `K dY = -T` without forming the dense matrix.
pub fn apply_kkt<T: Real>(kkt: &KktMatrix<T>, v: &[DVector<T>]) -> Vec<DVector<T>> {
    let d = &kkt.dims;
    let n_stages = kkt.blocks.len();
    let mut out = Vec::with_capacity(n_stages);
    for n in 0..n_stages {
        let mut r = &kkt.blocks[n] * &v[n];
        if n > 0 {
            for j in 0..d.n_x {
                r[d.o_lambda() + j] += v[n - 1][d.o_z() + j];
            }
        }
        if n + 1 < n_stages {
            for j in 0..d.n_x {
                r[d.o_z() + j] += v[n + 1][d.o_lambda() + j];
            }
        }
        out.push(r);
    }
    out
}

/// Assembles the dense form of the block-tridiagonal matrix.
pub fn dense_kkt<T: Real>(kkt: &KktMatrix<T>) -> DMatrix<T> {
    let d = &kkt.dims;
    let n_y = d.n_y();
    let n = kkt.blocks.len();
    let mut m = DMatrix::zeros(n * n_y, n * n_y);
    for b in 0..n {
        m.view_mut((b * n_y, b * n_y), (n_y, n_y)).copy_from(&kkt.blocks[b]);
        if b > 0 {
            for j in 0..d.n_x {
                m[(b * n_y + d.o_lambda() + j, (b - 1) * n_y + d.o_z() + j)] = T::one();
            }
        }
        if b + 1 < n {
            for j in 0..d.n_x {
                m[(b * n_y + d.o_z() + j, (b + 1) * n_y + d.o_lambda() + j)] = T::one();
            }
        }
    }
    m
}
