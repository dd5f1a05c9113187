//! Outer continuation loop: termination tests, Newton step, globalization,
//! restoration fallback, and perturbation scheduling.

use std::time::Instant;

use nalgebra::DVector;

use crate::globalization::{
    cost_slope, directional_derivative, line_search_with_soc, update_penalty, LineSearchParams,
    MeritState, StepKind,
};
use crate::kkt::{assemble_system, eval_merit_data, Iterate, Perturbation};
use crate::num::{real, Real};
use crate::problem::DiscretizedOcpec;
use crate::restoration::{run_restoration, RestorationStatus};
use crate::riccati::solve_newton_step;
use crate::{Error, Result};

/// Every named constant of the method.
#[derive(Debug, Clone)]
pub struct SolverOptions<T: Real> {
    /// Iteration cap of the outer loop.
    pub max_iterations: usize,
    /// Primal infeasibility tolerance.
    pub tol_primal: T,
    /// Dual infeasibility tolerance.
    pub tol_dual: T,
    /// Tolerance on the larger of the two infeasibilities.
    pub tol_combined: T,
    /// Initial and target equilibrium relaxation.
    pub s_init: T,
    pub s_final: T,
    /// Initial and target complementarity smoothing.
    pub z_init: T,
    pub z_final: T,
    /// Linear and superlinear shrink factors of the relaxation schedule.
    pub s_shrink_factor: T,
    pub s_shrink_exponent: T,
    pub z_shrink_factor: T,
    pub z_shrink_exponent: T,
    /// Regularization of the equality-dual diagonal.
    pub reg_eq: T,
    /// Regularization of the FB scaling diagonals.
    pub reg_fb: T,
    /// Margin constant of the penalty lower bound.
    pub merit_margin: T,
    /// Smallest trial step size.
    pub alpha_min: T,
    /// Backtracking factor.
    pub backtrack_factor: T,
    /// Armijo sufficient-decrease coefficient.
    pub armijo_coeff: T,
    /// Proximity-objective scale of the restoration phase.
    pub restoration_scale: T,
    /// Required violation reduction factor of the restoration phase.
    pub restoration_target: T,
    /// Cap on recovered equality duals.
    pub dual_recovery_cap: T,
    /// Inner iteration cap of the restoration phase.
    pub restoration_max_iterations: usize,
    /// Whether the second-order correction is active.
    pub soc_enabled: bool,
    /// Initial penalty parameter.
    pub penalty_init: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol_primal: real(1e-4),
            tol_dual: real(1e-4),
            tol_combined: real(1e-2),
            s_init: real(1e-1),
            s_final: real(1e-4),
            z_init: real(1e-1),
            z_final: real(1e-4),
            s_shrink_factor: real(0.2),
            s_shrink_exponent: real(1.5),
            z_shrink_factor: real(0.2),
            z_shrink_exponent: real(1.5),
            reg_eq: real(1e-7),
            reg_fb: real(1e-7),
            merit_margin: real(0.1),
            alpha_min: real(0.01),
            backtrack_factor: real(0.7),
            armijo_coeff: real(1e-4),
            restoration_scale: real(1e-6),
            restoration_target: real(0.9),
            dual_recovery_cap: real(1e3),
            restoration_max_iterations: 20,
            soc_enabled: true,
            penalty_init: T::one(),
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        if self.max_iterations == 0 {
            return Err(Error::InvalidOptions("max_iterations must be positive".into()));
        }
        if self.tol_primal <= zero || self.tol_dual <= zero || self.tol_combined <= zero {
            return Err(Error::InvalidOptions("tolerances must be positive".into()));
        }
        if self.s_final < zero || self.s_init < self.s_final {
            return Err(Error::InvalidOptions(
                "relaxation must satisfy s_init >= s_final >= 0".into(),
            ));
        }
        if self.z_final <= zero || self.z_init < self.z_final {
            return Err(Error::InvalidOptions(
                "smoothing must satisfy z_init >= z_final > 0".into(),
            ));
        }
        if self.s_shrink_factor <= zero
            || self.s_shrink_factor >= one
            || self.z_shrink_factor <= zero
            || self.z_shrink_factor >= one
        {
            return Err(Error::InvalidOptions("shrink factors must lie in (0, 1)".into()));
        }
        if self.s_shrink_exponent <= one || self.z_shrink_exponent <= one {
            return Err(Error::InvalidOptions("shrink exponents must exceed 1".into()));
        }
        if self.reg_eq < zero || self.reg_fb < zero {
            return Err(Error::InvalidOptions("regularizations must be nonnegative".into()));
        }
        if self.merit_margin <= zero || self.merit_margin >= one {
            return Err(Error::InvalidOptions("merit margin must lie in (0, 1)".into()));
        }
        if self.alpha_min <= zero || self.alpha_min > one {
            return Err(Error::InvalidOptions("alpha_min must lie in (0, 1]".into()));
        }
        if self.backtrack_factor <= zero || self.backtrack_factor >= one {
            return Err(Error::InvalidOptions("backtrack factor must lie in (0, 1)".into()));
        }
        if self.armijo_coeff <= zero || self.armijo_coeff >= one {
            return Err(Error::InvalidOptions("armijo coefficient must lie in (0, 1)".into()));
        }
        if self.restoration_scale <= zero {
            return Err(Error::InvalidOptions("restoration scale must be positive".into()));
        }
        if self.restoration_target <= zero || self.restoration_target >= one {
            return Err(Error::InvalidOptions(
                "restoration target must lie in (0, 1)".into(),
            ));
        }
        if self.dual_recovery_cap <= zero {
            return Err(Error::InvalidOptions("dual recovery cap must be positive".into()));
        }
        if self.penalty_init <= zero {
            return Err(Error::InvalidOptions("initial penalty must be positive".into()));
        }
        Ok(())
    }
}

/// Exit state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    RestorationFailed,
    EvaluatorError,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::RestorationFailed => "restoration_failed",
            SolveStatus::EvaluatorError => "evaluator_error",
        }
    }
}

/// One outer-iteration record.
#[derive(Debug, Clone)]
pub struct HistoryRow<T: Real> {
    pub iteration: usize,
    /// Merit value at the iterate the step was computed from.
    pub theta: T,
    /// Total constraint violation at that iterate.
    pub violation: T,
    pub primal_inf: T,
    pub dual_inf: T,
    /// Infinity norm of the KKT residual at that iterate.
    pub kkt_inf: T,
    pub alpha: T,
    pub kind: StepKind,
    pub s: T,
    pub z: T,
    pub beta: T,
    pub soc: bool,
    pub frp: bool,
    pub trials: usize,
    /// Factorizations performed this iteration (the correction step reuses
    /// the existing one).
    pub factorizations: usize,
    /// Curvature correction applied to the Hamiltonian Hessian block.
    pub hessian_shift: T,
}

/// Telemetry of one restoration invocation.
#[derive(Debug, Clone)]
pub struct FrpEvent<T: Real> {
    pub iteration: usize,
    pub restored: bool,
    pub inner_iterations: usize,
    pub violation_before: T,
    pub violation_after: T,
}

/// Everything a solve produces.
#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub status: SolveStatus,
    pub iterate: Iterate<T>,
    pub perturbation: Perturbation<T>,
    /// Outer iterations executed (excluding the final termination check).
    pub iterations: usize,
    /// Iterations that produced an accepted line-search step.
    pub accepted_iterations: usize,
    pub history: Vec<HistoryRow<T>>,
    pub frp_events: Vec<FrpEvent<T>>,
    /// Which termination branches held at the optimal point:
    /// `[primal, dual, combined]`.
    pub termination_branches: Option<[bool; 3]>,
    pub evaluator_error: Option<String>,
    pub wall_time: std::time::Duration,
}

impl<T: Real> SolveReport<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Termination test: both perturbations at their targets and at least one
/// infeasibility branch below tolerance.
pub fn check_termination<T: Real>(
    s: T,
    z: T,
    primal_inf: T,
    dual_inf: T,
    options: &SolverOptions<T>,
) -> bool {
    termination_branches(s, z, primal_inf, dual_inf, options).is_some()
}

fn termination_branches<T: Real>(
    s: T,
    z: T,
    primal_inf: T,
    dual_inf: T,
    options: &SolverOptions<T>,
) -> Option<[bool; 3]> {
    if s > options.s_final || z > options.z_final {
        return None;
    }
    let b1 = primal_inf <= options.tol_primal;
    let b2 = dual_inf <= options.tol_dual;
    let b3 = primal_inf.max(dual_inf) <= options.tol_combined;
    (b1 || b2 || b3).then_some([b1, b2, b3])
}

/// Perturbation schedule: when the primal infeasibility is within ten times
/// its tolerance, shrink each parameter by the faster of a fixed factor and
/// a superlinear power, floored at its target.
pub fn update_perturbation<T: Real>(
    pert: Perturbation<T>,
    primal_inf: T,
    options: &SolverOptions<T>,
) -> Perturbation<T> {
    let ten = real::<T>(10.0);
    if primal_inf > ten * options.tol_primal {
        return pert;
    }
    let s = (options.s_shrink_factor * pert.s)
        .min(pert.s.powf(options.s_shrink_exponent))
        .max(options.s_final);
    let z = (options.z_shrink_factor * pert.z)
        .min(pert.z.powf(options.z_shrink_exponent))
        .max(options.z_final);
    Perturbation::new(s, z)
}

/// Default cold-start iterate: primals zero, inequality duals one, equality
/// duals zero.
pub fn cold_start<T: Real>(problem: &DiscretizedOcpec<T>) -> Iterate<T> {
    let d = problem.dims();
    let mut y = Iterate::zeros(d);
    for n in 0..d.n_stages {
        for i in 0..d.n_sigma {
            y.stage_mut(n)[d.o_sigma() + i] = T::one();
        }
        for i in 0..d.n_gamma {
            y.stage_mut(n)[d.o_gamma() + i] = T::one();
        }
    }
    y
}

/// Runs the continuation method from `y0`.
///
/// Algorithmic failures are reported through `SolveReport::status`;
/// `Err` is reserved for structural problems such as invalid options or
/// mismatched dimensions.
pub fn solve<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y0: &Iterate<T>,
    options: &SolverOptions<T>,
) -> Result<SolveReport<T>> {
    options.validate()?;
    let d = problem.dims();
    if y0.n_stages() != d.n_stages || y0.stage(0).len() != d.n_y() {
        return Err(Error::DimensionMismatch {
            context: "initial iterate",
            expected: d.n_y() * d.n_stages,
            actual: y0.stage(0).len() * y0.n_stages(),
        });
    }

    let start = Instant::now();
    let mut y = y0.clone();
    let mut pert = Perturbation::new(options.s_init, options.z_init);
    let mut merit_state = MeritState::new(options.penalty_init, options.merit_margin);
    let params = LineSearchParams {
        alpha_min: options.alpha_min,
        backtrack_factor: options.backtrack_factor,
        armijo_coeff: options.armijo_coeff,
        soc_enabled: options.soc_enabled,
    };

    let mut history: Vec<HistoryRow<T>> = Vec::new();
    let mut frp_events: Vec<FrpEvent<T>> = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut termination = None;
    let mut evaluator_error = None;
    let mut last_shift = T::zero();

    for k in 1..=options.max_iterations {
        let (mut matrix, bundle) =
            match assemble_system(problem, &y, pert, options.reg_eq, options.reg_fb) {
                Ok(pair) => pair,
                Err(e) => {
                    status = SolveStatus::EvaluatorError;
                    evaluator_error = Some(e.to_string());
                    break;
                }
            };

        if let Some(branches) =
            termination_branches(pert.s, pert.z, bundle.primal_inf, bundle.dual_inf, options)
        {
            status = SolveStatus::Optimal;
            termination = Some(branches);
            break;
        }

        let mut row = HistoryRow {
            iteration: k,
            theta: bundle.cost + merit_state.beta * bundle.violation,
            violation: bundle.violation,
            primal_inf: bundle.primal_inf,
            dual_inf: bundle.dual_inf,
            kkt_inf: bundle.kkt_inf(),
            alpha: T::zero(),
            kind: StepKind::Failure,
            s: pert.s,
            z: pert.z,
            beta: merit_state.beta,
            soc: false,
            frp: false,
            trials: 0,
            factorizations: 1,
            hessian_shift: T::zero(),
        };

        // Newton step; an uncorrectable stage block falls back to
        // restoration like a failed line search.
        let mut need_restoration = false;
        match solve_newton_step(&mut matrix, &bundle.residual, last_shift) {
            Ok(step) => {
                let direction = step.direction;
                let fact = step.factorization;
                last_shift = step.hessian_shift;
                row.factorizations = step.factorizations;
                row.hessian_shift = step.hessian_shift;
                let slope = cost_slope(problem, &bundle.cost_gradients, &direction);
                merit_state.beta = update_penalty(
                    merit_state.beta,
                    slope,
                    bundle.violation,
                    merit_state.margin,
                );
                let dtheta = directional_derivative(slope, bundle.violation, merit_state.beta);
                merit_state.last_slope = Some(dtheta);
                row.beta = merit_state.beta;
                row.theta = bundle.cost + merit_state.beta * bundle.violation;
                let theta0 = row.theta;
                let outcome = line_search_with_soc(
                    problem,
                    &y,
                    &direction,
                    &fact,
                    &bundle.residual,
                    pert,
                    merit_state.beta,
                    theta0,
                    bundle.cost,
                    dtheta,
                    &params,
                );
                row.trials = outcome.trials;
                row.kind = outcome.kind;
                if outcome.kind == StepKind::Failure {
                    need_restoration = true;
                } else {
                    row.alpha = outcome.alpha;
                    row.soc = outcome.kind == StepKind::SocStep;
                    merit_state.last_alpha = Some(outcome.alpha);
                    y = outcome.iterate;
                    let primal_post = outcome
                        .merit_data
                        .as_ref()
                        .map(|md| md.primal_inf)
                        .unwrap_or(bundle.primal_inf);
                    pert = update_perturbation(pert, primal_post, options);
                }
            }
            Err(Error::SingularStageBlock { .. }) => {
                need_restoration = true;
            }
            Err(e) => {
                status = SolveStatus::EvaluatorError;
                evaluator_error = Some(e.to_string());
                history.push(row);
                break;
            }
        }

        if need_restoration {
            row.frp = true;
            let frp = run_restoration(problem, &y, pert, options);
            frp_events.push(FrpEvent {
                iteration: k,
                restored: frp.status == RestorationStatus::Restored,
                inner_iterations: frp.inner_iterations,
                violation_before: frp.violation_start,
                violation_after: frp.violation_end,
            });
            match (frp.status, frp.iterate) {
                (RestorationStatus::Restored, Some(y_frp)) => {
                    y = y_frp;
                    match eval_merit_data(problem, &y, pert) {
                        Ok(md) => pert = update_perturbation(pert, md.primal_inf, options),
                        Err(e) => {
                            status = SolveStatus::EvaluatorError;
                            evaluator_error = Some(e.to_string());
                            history.push(row);
                            break;
                        }
                    }
                }
                _ => {
                    status = SolveStatus::RestorationFailed;
                    history.push(row);
                    break;
                }
            }
        }

        history.push(row);
    }

    let iterations = history.len();
    let accepted_iterations = history.iter().filter(|r| r.kind != StepKind::Failure).count();
    Ok(SolveReport {
        status,
        iterate: y,
        perturbation: pert,
        iterations,
        accepted_iterations,
        history,
        frp_events,
        termination_branches: termination,
        evaluator_error,
        wall_time: start.elapsed(),
    })
}

/// Stage-wise direction type produced by the linear solver.
pub type Direction<T> = Vec<DVector<T>>;
