//! l1 exact-penalty merit function and the backtracking line search with
//! second-order correction.

use nalgebra::DVector;

use crate::kkt::{eval_merit_data, fb, Iterate, KktResidual, MeritData, Perturbation};
use crate::num::{is_finite, real, Real};
use crate::problem::DiscretizedOcpec;
use crate::riccati::StageFactorization;
use crate::Result;

/// Violation below which the penalty parameter is left untouched, guarding
/// the update rule's division.
pub const VIOLATION_EPS: f64 = 1e-12;

/// Slack added on top of the penalty lower bound.
pub const PENALTY_PAD: f64 = 1e-4;

/// Penalty-parameter state carried across iterations of one solve.
#[derive(Debug, Clone)]
pub struct MeritState<T: Real> {
    /// Penalty parameter; never decreases within a solve.
    pub beta: T,
    /// Margin constant of the penalty lower bound.
    pub margin: T,
    /// Directional derivative of the last search.
    pub last_slope: Option<T>,
    /// Last accepted step size.
    pub last_alpha: Option<T>,
}

impl<T: Real> MeritState<T> {
    pub fn new(beta0: T, margin: T) -> Self {
        Self {
            beta: beta0,
            margin,
            last_slope: None,
            last_alpha: None,
        }
    }
}

/// Per-stage l1 constraint violation `M_n` and the total.
pub fn constraint_violation<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
) -> Result<(Vec<T>, T)> {
    let md = eval_merit_data(problem, y, pert)?;
    Ok((md.violation_stage, md.violation))
}

/// Merit value `Theta = sum L_n + beta * sum M_n`.
pub fn merit<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
    beta: T,
) -> Result<T> {
    let md = eval_merit_data(problem, y, pert)?;
    Ok(md.cost + beta * md.violation)
}

/// Penalty update: raises `beta` to the slope-based lower bound plus a pad
/// whenever the violation is meaningfully positive, and never decreases it.
pub fn update_penalty<T: Real>(beta_prev: T, cost_slope: T, violation: T, margin: T) -> T {
    if violation <= real(VIOLATION_EPS) {
        return beta_prev;
    }
    let bound = cost_slope / ((T::one() - margin) * violation) + real(PENALTY_PAD);
    beta_prev.max(bound)
}

/// Directional derivative of the merit function along a direction with the
/// given cost slope.
pub fn directional_derivative<T: Real>(cost_slope: T, violation: T, beta: T) -> T {
    cost_slope - beta * violation
}

/// `sum_n grad L_n . dZ_n` for a stage-wise direction.
pub fn cost_slope<T: Real>(
    problem: &DiscretizedOcpec<T>,
    cost_gradients: &[DVector<T>],
    direction: &[DVector<T>],
) -> T {
    let d = problem.dims();
    let mut acc = T::zero();
    for (g, dy) in cost_gradients.iter().zip(direction.iter()) {
        for i in 0..d.n_z() {
            acc += g[i] * dy[d.o_z() + i];
        }
    }
    acc
}

/// How a line search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    FullStep,
    SocStep,
    Backtracked,
    Failure,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::FullStep => "full-step",
            StepKind::SocStep => "soc-step",
            StepKind::Backtracked => "backtracked",
            StepKind::Failure => "failure",
        }
    }
}

/// Result of one merit line search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T: Real> {
    /// New iterate; equals the incoming iterate exactly when `kind` is
    /// `Failure`.
    pub iterate: Iterate<T>,
    pub alpha: T,
    pub kind: StepKind,
    pub trials: usize,
    pub soc_attempted: bool,
    /// Merit data at the accepted point; `None` on failure.
    pub merit_data: Option<MeritData<T>>,
    /// Merit value at the accepted point.
    pub theta: Option<T>,
}

/// Tunables of the backtracking search.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams<T: Real> {
    pub alpha_min: T,
    pub backtrack_factor: T,
    pub armijo_coeff: T,
    pub soc_enabled: bool,
}

fn failure_outcome<T: Real>(y: &Iterate<T>, trials: usize, soc_attempted: bool) -> LineSearchOutcome<T> {
    LineSearchOutcome {
        iterate: y.clone(),
        alpha: T::zero(),
        kind: StepKind::Failure,
        trials,
        soc_attempted,
        merit_data: None,
        theta: None,
    }
}

/// Backtracking Armijo search on the merit function, with at most one
/// second-order correction attempt at the full step.
///
/// The correction is tried only when the full step fails the Armijo test yet
/// reduces the total cost. Its right-hand side reuses the constraint values
/// already evaluated at the full-step trial and the FB scaling factors of the
/// current residual, and it is solved with the existing factorization.
#[allow(clippy::too_many_arguments)]
pub fn line_search_with_soc<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    direction: &[DVector<T>],
    fact: &StageFactorization<T>,
    residual: &KktResidual<T>,
    pert: Perturbation<T>,
    beta: T,
    theta0: T,
    cost0: T,
    dtheta: T,
    params: &LineSearchParams<T>,
) -> LineSearchOutcome<T> {
    let mut alpha = T::one();
    let mut trials = 0;
    let mut soc_attempted = false;
    let first_alpha = alpha;
    loop {
        trials += 1;
        let y_trial = y.plus_scaled(alpha, direction);
        let md = match eval_merit_data(problem, &y_trial, pert) {
            Ok(md) => md,
            Err(_) => return failure_outcome(y, trials, soc_attempted),
        };
        let theta_trial = md.cost + beta * md.violation;
        if !is_finite(theta_trial) {
            return failure_outcome(y, trials, soc_attempted);
        }
        if theta_trial <= theta0 + params.armijo_coeff * alpha * dtheta {
            let kind = if alpha == first_alpha {
                StepKind::FullStep
            } else {
                StepKind::Backtracked
            };
            return LineSearchOutcome {
                iterate: y_trial,
                alpha,
                kind,
                trials,
                soc_attempted,
                merit_data: Some(md),
                theta: Some(theta_trial),
            };
        }
        if alpha == first_alpha && params.soc_enabled && !soc_attempted && md.cost <= cost0 {
            soc_attempted = true;
            if let Some(outcome) =
                try_second_order_correction(problem, y, &y_trial, &md, fact, residual, pert, beta, theta0)
            {
                return LineSearchOutcome {
                    trials: trials + 1,
                    soc_attempted,
                    ..outcome
                };
            }
        }
        if alpha <= params.alpha_min {
            return failure_outcome(y, trials, soc_attempted);
        }
        alpha = (params.backtrack_factor * alpha).max(params.alpha_min);
    }
}

/// Builds and tests the corrected step; `None` means the correction was
/// rejected and regular backtracking resumes.
#[allow(clippy::too_many_arguments)]
fn try_second_order_correction<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    y_full: &Iterate<T>,
    md_full: &MeritData<T>,
    fact: &StageFactorization<T>,
    residual: &KktResidual<T>,
    pert: Perturbation<T>,
    beta: T,
    theta0: T,
) -> Option<LineSearchOutcome<T>> {
    let d = problem.dims();
    let mut rhs = Vec::with_capacity(residual.stages.len());
    for n in 0..residual.stages.len() {
        let mut t = residual.stages[n].clone();
        let vals = &md_full.values[n];
        let sigma_fs = y_full.sigma(n);
        let gamma_fs = y_full.gamma(n);
        for i in 0..d.n_sigma {
            let psi = fb(sigma_fs[i], vals.inequality[i], pert.z);
            t[d.o_sigma() + i] += -residual.fb_factor_g[n][i] * psi;
        }
        for i in 0..d.n_eta {
            t[d.o_eta() + i] += vals.equality[i];
        }
        for i in 0..d.n_x {
            t[d.o_lambda() + i] += vals.defect[i];
        }
        for i in 0..d.n_gamma {
            let psi = fb(gamma_fs[i], vals.phi[i], pert.z);
            t[d.o_gamma() + i] += -residual.fb_factor_phi[n][i] * psi;
        }
        // gradient rows carry no correction
        rhs.push(t);
    }
    let dir_cor = fact.resolve(&rhs).ok()?;
    let y_soc = y.plus_scaled(T::one(), &dir_cor);
    let md_soc = eval_merit_data(problem, &y_soc, pert).ok()?;
    let theta_soc = md_soc.cost + beta * md_soc.violation;
    if is_finite(theta_soc) && theta_soc <= theta0 {
        Some(LineSearchOutcome {
            iterate: y_soc,
            alpha: T::one(),
            kind: StepKind::SocStep,
            trials: 0,
            soc_attempted: true,
            merit_data: Some(md_soc),
            theta: Some(theta_soc),
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_update_arithmetic() {
        let beta = update_penalty(1e-6, 1.0, 1.0, 0.1);
        assert!((beta - (1.0 / 0.9 + PENALTY_PAD)).abs() < 1e-12);
    }

    #[test]
    fn penalty_keeps_previous_when_slope_nonpositive() {
        let beta = update_penalty(5.0, -1.0, 1.0, 0.1);
        assert_eq!(beta, 5.0);
    }

    #[test]
    fn penalty_unchanged_at_zero_violation() {
        let beta = update_penalty(2.0, 100.0, 0.0, 0.1);
        assert_eq!(beta, 2.0);
    }

    #[test]
    fn directional_derivative_formula() {
        assert_eq!(directional_derivative(1.0, 1.0, 2.0), -1.0);
        assert_eq!(directional_derivative(0.7, 0.0, 3.0), 0.7);
    }

    #[test]
    fn penalty_update_enforces_slope_margin() {
        // after the update, DTheta <= -margin * beta * violation
        let (slope, violation, margin) = (2.3, 0.7, 0.1);
        let beta = update_penalty(1.0, slope, violation, margin);
        let dtheta = directional_derivative(slope, violation, beta);
        assert!(dtheta + margin * beta * violation <= 1e-10);
    }
}
