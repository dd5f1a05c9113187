//! Central finite differences and the derivative validation report.

use nalgebra::{DMatrix, DVector};

use crate::num::{real, Real};
use crate::problem::DiscretizedOcpec;
use crate::Result;

/// Central finite-difference Jacobian of a vector map.
pub fn fd_jacobian<T, F>(f: &F, x: &[T], h: f64) -> DMatrix<T>
where
    T: Real,
    F: Fn(&[T]) -> DVector<T>,
{
    let step = real::<T>(h);
    let two = real::<T>(2.0);
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut pt = x.to_vec();
    for c in 0..x.len() {
        let base = pt[c];
        pt[c] = base + step;
        let hi = f(&pt);
        pt[c] = base - step;
        let lo = f(&pt);
        pt[c] = base;
        for r in 0..m {
            jac[(r, c)] = (hi[r] - lo[r]) / (two * step);
        }
    }
    jac
}

/// Central finite-difference gradient of a scalar map.
pub fn fd_gradient<T, F>(f: &F, x: &[T], h: f64) -> DVector<T>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    let step = real::<T>(h);
    let two = real::<T>(2.0);
    let mut g = DVector::zeros(x.len());
    let mut pt = x.to_vec();
    for c in 0..x.len() {
        let base = pt[c];
        pt[c] = base + step;
        let hi = f(&pt);
        pt[c] = base - step;
        let lo = f(&pt);
        pt[c] = base;
        g[c] = (hi - lo) / (two * step);
    }
    g
}

/// Result of comparing one supplied derivative against finite differences.
#[derive(Debug, Clone)]
pub struct DerivativeCheck {
    pub stage: usize,
    pub function: &'static str,
    pub max_error: f64,
    /// Entries `(row, col, error)` whose error exceeded the tolerance.
    pub flagged: Vec<(usize, usize, f64)>,
}

/// Per-function summary produced by [`check_derivatives`].
#[derive(Debug, Clone, Default)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
}

impl DerivativeReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.flagged.is_empty())
    }

    /// Largest error over all checks of the named function.
    pub fn max_error(&self, function: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.function == function)
            .map(|c| c.max_error)
            .fold(0.0, f64::max)
    }
}

fn rel_error<T: Real>(a: T, b: T) -> f64 {
    let scale = T::one().max(a.abs()).max(b.abs());
    num_traits::ToPrimitive::to_f64(&((a - b) / scale).abs()).unwrap_or(f64::INFINITY)
}

fn compare<T: Real>(
    stage: usize,
    function: &'static str,
    analytic: &DMatrix<T>,
    numeric: &DMatrix<T>,
    tol: f64,
    report: &mut DerivativeReport,
) {
    let mut check = DerivativeCheck {
        stage,
        function,
        max_error: 0.0,
        flagged: Vec::new(),
    };
    for r in 0..analytic.nrows() {
        for c in 0..analytic.ncols() {
            let err = rel_error(analytic[(r, c)], numeric[(r, c)]);
            if err > check.max_error {
                check.max_error = err;
            }
            if err > tol {
                check.flagged.push((r, c, err));
            }
        }
    }
    report.checks.push(check);
}

/// Finite-difference step used by [`check_derivatives`].
pub const CHECK_STEP: f64 = 1e-7;

/// Validates all supplied Jacobians and the Hamiltonian Hessian of `problem`
/// against central finite differences at the stage-wise primal point `z`.
///
/// The Hessian is checked with deterministic non-uniform dual weights so that
/// sign and placement errors in any weighted term are visible.
pub fn check_derivatives<T: Real>(
    problem: &DiscretizedOcpec<T>,
    z: &[DVector<T>],
    tol: f64,
) -> Result<DerivativeReport> {
    let d = problem.dims().clone();
    let mut report = DerivativeReport::default();
    let probe = |count: usize, offset: f64| -> Vec<T> {
        (0..count)
            .map(|i| real::<T>(offset + 0.3 * (i as f64 + 1.0) / (count as f64 + 1.0)))
            .collect()
    };
    for n in 0..d.n_stages {
        let zs = z[n].as_slice();

        let grad = problem.cost_gradient(n, zs);
        let fd_grad = fd_gradient(&|v: &[T]| problem.cost(n, v), zs, CHECK_STEP);
        compare(
            n,
            "cost_gradient",
            &DMatrix::from_column_slice(grad.len(), 1, grad.as_slice()),
            &DMatrix::from_column_slice(fd_grad.len(), 1, fd_grad.as_slice()),
            tol,
            &mut report,
        );

        let gj = problem.inequality_jacobian(n, zs);
        let gj_fd = fd_jacobian(&|v: &[T]| problem.inequality(n, v), zs, CHECK_STEP);
        compare(n, "inequality_jacobian", &gj, &gj_fd, tol, &mut report);

        let cj = problem.equality_jacobian(n, zs);
        let cj_fd = fd_jacobian(&|v: &[T]| problem.equality(n, v), zs, CHECK_STEP);
        compare(n, "equality_jacobian", &cj, &cj_fd, tol, &mut report);

        let fj = problem.dynamics_jacobian(n, zs);
        let fj_fd = fd_jacobian(&|v: &[T]| problem.dynamics(n, v), zs, CHECK_STEP);
        compare(n, "dynamics_jacobian", &fj, &fj_fd, tol, &mut report);

        let sigma = probe(d.n_sigma, 0.5);
        let eta = probe(d.n_eta, -0.4);
        let lambda = probe(d.n_x, 0.2);
        let hess = problem.cost_hessian(n, zs)
            + problem.constraints_hessian(n, zs, &sigma, &eta, &lambda);
        // gradient of the Hamiltonian without the relaxed-equilibrium term
        let ham_grad = |v: &[T]| -> DVector<T> {
            let mut g = problem.cost_gradient(n, v);
            let gj = problem.inequality_jacobian(n, v);
            let cj = problem.equality_jacobian(n, v);
            let fj = problem.dynamics_jacobian(n, v);
            for (i, &s) in sigma.iter().enumerate() {
                for c in 0..g.len() {
                    g[c] -= gj[(i, c)] * s;
                }
            }
            for (j, &e) in eta.iter().enumerate() {
                for c in 0..g.len() {
                    g[c] += cj[(j, c)] * e;
                }
            }
            for (m, &l) in lambda.iter().enumerate() {
                for c in 0..g.len() {
                    g[c] += fj[(m, c)] * l;
                }
            }
            g
        };
        let hess_fd = fd_jacobian(&ham_grad, zs, CHECK_STEP);
        compare(n, "hamiltonian_hessian", &hess, &hess_fd, tol, &mut report);
    }
    Ok(report)
}
