//! Feasibility restoration phase.
//!
//! When the line search fails, the solver switches to minimizing a scaled
//! proximity objective around the failing iterate subject to the original
//! constraint set, using the same Newton/merit machinery with the correction
//! step disabled and the perturbation parameters frozen. The phase exits as
//! soon as the constraint violation has dropped to a fixed fraction of its
//! starting value; the equality duals of the returned iterate are recovered
//! stage-wise as minimum-norm least-squares solutions of the dual
//! feasibility conditions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::driver::SolverOptions;
use crate::globalization::{
    cost_slope, directional_derivative, line_search_with_soc, update_penalty, LineSearchParams,
    StepKind,
};
use crate::kkt::{assemble_system, eval_merit_data, Iterate, Perturbation};
use crate::num::{real, Real};
use crate::problem::{DiscretizedOcpec, StageEvaluator};
use crate::riccati::solve_newton_step;
use crate::Result;

/// Proximity-objective evaluator wrapping the parent problem's constraints.
struct ProximityObjective<T: Real> {
    parent: Arc<dyn StageEvaluator<T>>,
    /// Reference primal blocks, one per stage.
    reference: Vec<DVector<T>>,
    /// Diagonal scaling per stage.
    scaling: Vec<DVector<T>>,
}

impl<T: Real> StageEvaluator<T> for ProximityObjective<T> {
    fn cost(&self, n: usize, z: &[T]) -> T {
        let half = real::<T>(0.5);
        let r = &self.reference[n];
        let d = &self.scaling[n];
        let mut acc = T::zero();
        for i in 0..z.len() {
            let e = z[i] - r[i];
            acc += d[i] * e * e;
        }
        half * acc
    }

    fn cost_gradient(&self, n: usize, z: &[T]) -> DVector<T> {
        let r = &self.reference[n];
        let d = &self.scaling[n];
        DVector::from_iterator(z.len(), (0..z.len()).map(|i| d[i] * (z[i] - r[i])))
    }

    fn cost_hessian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.scaling[n].clone().rows(0, z.len()).into_owned())
    }

    fn inequality(&self, n: usize, z: &[T]) -> DVector<T> {
        self.parent.inequality(n, z)
    }

    fn inequality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.parent.inequality_jacobian(n, z)
    }

    fn equality(&self, n: usize, z: &[T]) -> DVector<T> {
        self.parent.equality(n, z)
    }

    fn equality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.parent.equality_jacobian(n, z)
    }

    fn dynamics(&self, n: usize, z: &[T]) -> DVector<T> {
        self.parent.dynamics(n, z)
    }

    fn dynamics_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.parent.dynamics_jacobian(n, z)
    }

    fn vi_value(&self, n: usize, z: &[T]) -> DVector<T> {
        self.parent.vi_value(n, z)
    }

    fn constraints_hessian(
        &self,
        n: usize,
        z: &[T],
        sigma: &[T],
        eta: &[T],
        lambda: &[T],
    ) -> DMatrix<T> {
        self.parent.constraints_hessian(n, z, sigma, eta, lambda)
    }
}

/// Diagonal proximity scaling for one reference block: `min(1, 1/|r_i|)`
/// times the global restoration scale.
pub fn proximity_scaling<T: Real>(reference: &[T], scale: T) -> DVector<T> {
    DVector::from_iterator(
        reference.len(),
        reference.iter().map(|&r| {
            let a = r.abs();
            if a <= T::one() {
                scale
            } else {
                scale / a
            }
        }),
    )
}

/// Builds the restoration problem: the parent constraint set with the cost
/// replaced by a scaled proximity objective centered at the start iterate's
/// primals.
pub fn build_restoration<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y_start: &Iterate<T>,
    scale: T,
) -> Result<DiscretizedOcpec<T>> {
    let d = problem.dims();
    let mut reference = Vec::with_capacity(d.n_stages);
    let mut scaling = Vec::with_capacity(d.n_stages);
    for n in 0..d.n_stages {
        let z = y_start.z(n);
        reference.push(DVector::from_column_slice(z));
        scaling.push(proximity_scaling(z, scale));
    }
    let eval = ProximityObjective {
        parent: problem.evaluator().clone(),
        reference,
        scaling,
    };
    DiscretizedOcpec::new(
        d.clone(),
        problem.bounds().clone(),
        problem.initial_state().clone(),
        Arc::new(eval),
    )
}

/// Exit state of the restoration phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestorationStatus {
    Restored,
    Failed,
}

/// Result of one restoration run.
#[derive(Debug, Clone)]
pub struct RestorationOutcome<T: Real> {
    pub status: RestorationStatus,
    /// Restored iterate; `None` when the phase failed.
    pub iterate: Option<Iterate<T>>,
    /// Newton steps taken inside the phase.
    pub inner_iterations: usize,
    pub violation_start: T,
    pub violation_end: T,
}

/// Runs the restoration phase from a start iterate with `(s, z)` frozen.
///
/// Primals and inequality duals are copied from the start iterate, equality
/// duals reset to zero. The violation test runs at the top of every inner
/// iteration, so an already-feasible start returns immediately with zero
/// inner iterations. Any numerical failure inside the phase maps to
/// `Failed`; the caller decides how fatal that is.
pub fn run_restoration<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y_start: &Iterate<T>,
    pert: Perturbation<T>,
    options: &SolverOptions<T>,
) -> RestorationOutcome<T> {
    match run_restoration_inner(problem, y_start, pert, options) {
        Ok(out) => out,
        Err(_) => RestorationOutcome {
            status: RestorationStatus::Failed,
            iterate: None,
            inner_iterations: 0,
            violation_start: T::zero(),
            violation_end: T::zero(),
        },
    }
}

fn run_restoration_inner<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y_start: &Iterate<T>,
    pert: Perturbation<T>,
    options: &SolverOptions<T>,
) -> Result<RestorationOutcome<T>> {
    let d = problem.dims();
    let rest = build_restoration(problem, y_start, options.restoration_scale)?;

    let mut ybar = y_start.clone();
    for n in 0..d.n_stages {
        // zero the equality duals (eta, lambda)
        for i in 0..d.n_eta + d.n_x {
            ybar.stage_mut(n)[d.o_eta() + i] = T::zero();
        }
    }

    let m_start = eval_merit_data(problem, y_start, pert)?.violation;
    let target = options.restoration_target * m_start;
    let mut beta = options.penalty_init;
    let params = LineSearchParams {
        alpha_min: options.alpha_min,
        backtrack_factor: options.backtrack_factor,
        armijo_coeff: options.armijo_coeff,
        soc_enabled: false,
    };

    let mut m_cur = eval_merit_data(&rest, &ybar, pert)?.violation;
    let mut last_shift = T::zero();
    for j in 1..=options.restoration_max_iterations {
        if m_cur <= target {
            return Ok(finish_restored(
                problem, &ybar, options, j - 1, m_start, m_cur,
            ));
        }
        let (mut matrix, bundle) =
            assemble_system(&rest, &ybar, pert, options.reg_eq, options.reg_fb)?;
        let step = solve_newton_step(&mut matrix, &bundle.residual, last_shift)?;
        let direction = step.direction;
        let fact = step.factorization;
        last_shift = step.hessian_shift;
        let slope = cost_slope(&rest, &bundle.cost_gradients, &direction);
        beta = update_penalty(beta, slope, bundle.violation, options.merit_margin);
        let dtheta = directional_derivative(slope, bundle.violation, beta);
        let theta0 = bundle.cost + beta * bundle.violation;
        let outcome = line_search_with_soc(
            &rest,
            &ybar,
            &direction,
            &fact,
            &bundle.residual,
            pert,
            beta,
            theta0,
            bundle.cost,
            dtheta,
            &params,
        );
        if outcome.kind == StepKind::Failure {
            return Ok(RestorationOutcome {
                status: RestorationStatus::Failed,
                iterate: None,
                inner_iterations: j - 1,
                violation_start: m_start,
                violation_end: m_cur,
            });
        }
        m_cur = outcome
            .merit_data
            .as_ref()
            .map(|md| md.violation)
            .unwrap_or(m_cur);
        ybar = outcome.iterate;
    }
    Ok(RestorationOutcome {
        status: RestorationStatus::Failed,
        iterate: None,
        inner_iterations: options.restoration_max_iterations,
        violation_start: m_start,
        violation_end: m_cur,
    })
}

fn finish_restored<T: Real>(
    problem: &DiscretizedOcpec<T>,
    ybar: &Iterate<T>,
    options: &SolverOptions<T>,
    inner_iterations: usize,
    violation_start: T,
    violation_end: T,
) -> RestorationOutcome<T> {
    let mut y_frp = ybar.clone();
    let (eta, lambda) = recover_equality_duals(problem, ybar, options.dual_recovery_cap);
    let d = problem.dims();
    for n in 0..d.n_stages {
        y_frp.set_block(n, d.o_eta(), eta[n].as_slice());
        y_frp.set_block(n, d.o_lambda(), lambda[n].as_slice());
    }
    RestorationOutcome {
        status: RestorationStatus::Restored,
        iterate: Some(y_frp),
        inner_iterations,
        violation_start,
        violation_end,
    }
}

/// Recovers `(eta, lambda)` stage-wise as the minimum-norm least-squares
/// solution of the dual feasibility conditions, sweeping backward so that
/// each stage uses the already-recovered `lambda_{n+1}`.
///
/// If the recovered duals exceed the cap in infinity norm, all of them are
/// reset to zero.
pub fn recover_equality_duals<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    cap: T,
) -> (Vec<DVector<T>>, Vec<DVector<T>>) {
    let d = problem.dims();
    let n_stages = d.n_stages;
    let mut eta: Vec<DVector<T>> = vec![DVector::zeros(d.n_eta); n_stages];
    let mut lambda: Vec<DVector<T>> = vec![DVector::zeros(d.n_x); n_stages];
    let mut max_abs = T::zero();
    for n in (0..n_stages).rev() {
        let z = y.z(n);
        let mut b = problem.cost_gradient(n, z);
        let g_jac = problem.inequality_jacobian(n, z);
        let phi_jac = match problem.phi_jacobian(z) {
            Ok(j) => j,
            Err(_) => return (eta, lambda),
        };
        b.gemv_tr(-T::one(), &g_jac, &DVector::from_column_slice(y.sigma(n)), T::one());
        b.gemv_tr(-T::one(), &phi_jac, &DVector::from_column_slice(y.gamma(n)), T::one());
        if n + 1 < n_stages {
            for i in 0..d.n_x {
                b[d.z_x() + i] += lambda[n + 1][i];
            }
        }
        // stack [Jc' Jf'] and solve for (eta, lambda) in least squares
        let c_jac = problem.equality_jacobian(n, z);
        let f_jac = problem.dynamics_jacobian(n, z);
        let cols = d.n_eta + d.n_x;
        let mut m = DMatrix::zeros(d.n_z(), cols);
        for r in 0..d.n_z() {
            for c in 0..d.n_eta {
                m[(r, c)] = c_jac[(c, r)];
            }
            for c in 0..d.n_x {
                m[(r, d.n_eta + c)] = f_jac[(c, r)];
            }
        }
        b.neg_mut();
        let svd = m.svd(true, true);
        let rank_eps = svd.singular_values.max() * real::<T>(1e-12);
        let sol = svd
            .solve(&b, rank_eps.max(real::<T>(1e-300)))
            .unwrap_or_else(|_| DVector::zeros(cols));
        for i in 0..d.n_eta {
            eta[n][i] = sol[i];
            max_abs = max_abs.max(sol[i].abs());
        }
        for i in 0..d.n_x {
            lambda[n][i] = sol[d.n_eta + i];
            max_abs = max_abs.max(sol[d.n_eta + i].abs());
        }
    }
    if max_abs >= cap {
        for n in 0..n_stages {
            eta[n].fill(T::zero());
            lambda[n].fill(T::zero());
        }
    }
    (eta, lambda)
}
