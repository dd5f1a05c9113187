//! Data model of the discretized OCPEC.
//!
//! A problem is a horizon of `N` identical-shaped stages. Stage `n` owns the
//! primal block `Z_n = (x_n, tau_n, p_n, w_n)` and the dual block
//! `(sigma_n, eta_n, lambda_n, gamma_n)`; the implicit-Euler dynamics couple
//! consecutive stages through `x_{n-1} + F_n = 0` with `F = f dt - x`.
//! Stage evaluators are pure and reentrant; problems are immutable after
//! construction and safe to share across threads.

pub mod fd;
pub mod scholtes;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::num::{real, Real};
use crate::{Error, Result};

/// Problem sizes and the stage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dimensions<T: Real> {
    pub n_x: usize,
    pub n_tau: usize,
    pub n_p: usize,
    pub n_w: usize,
    pub n_sigma: usize,
    pub n_eta: usize,
    pub n_gamma: usize,
    /// Number of stages `N`.
    pub n_stages: usize,
    /// Step length in seconds.
    pub dt: T,
}

impl<T: Real> Dimensions<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_x: usize,
        n_tau: usize,
        n_p: usize,
        n_sigma: usize,
        n_eta: usize,
        n_gamma: usize,
        n_stages: usize,
        dt: T,
    ) -> Result<Self> {
        if n_stages == 0 {
            return Err(Error::InvalidOptions("stage count must be at least 1".into()));
        }
        if dt <= T::zero() {
            return Err(Error::InvalidOptions("step length must be positive".into()));
        }
        Ok(Self {
            n_x,
            n_tau,
            n_p,
            n_w: n_p,
            n_sigma,
            n_eta,
            n_gamma,
            n_stages,
            dt,
        })
    }

    /// Size of the primal block `Z_n`.
    pub fn n_z(&self) -> usize {
        self.n_x + self.n_tau + self.n_p + self.n_w
    }

    /// Size of the full stage vector (duals then primals).
    pub fn n_y(&self) -> usize {
        self.n_sigma + self.n_eta + self.n_x + self.n_gamma + self.n_z()
    }

    // Offsets into a stage vector. Rows of the stage residual use the same
    // partition, which keeps the diagonal KKT blocks symmetric.
    pub fn o_sigma(&self) -> usize {
        0
    }
    pub fn o_eta(&self) -> usize {
        self.n_sigma
    }
    pub fn o_lambda(&self) -> usize {
        self.n_sigma + self.n_eta
    }
    pub fn o_gamma(&self) -> usize {
        self.o_lambda() + self.n_x
    }
    pub fn o_z(&self) -> usize {
        self.o_gamma() + self.n_gamma
    }

    // Offsets inside the primal block.
    pub fn z_x(&self) -> usize {
        0
    }
    pub fn z_tau(&self) -> usize {
        self.n_x
    }
    pub fn z_p(&self) -> usize {
        self.n_x + self.n_tau
    }
    pub fn z_w(&self) -> usize {
        self.n_x + self.n_tau + self.n_p
    }
}

/// Box bounds of the variational-inequality set; `None` marks an infinite end.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundData<T: Real> {
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
}

impl<T: Real> BoundData<T> {
    pub fn new(lower: Vec<Option<T>>, upper: Vec<Option<T>>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "bound data",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for i in 0..lower.len() {
            if let (Some(l), Some(u)) = (lower[i], upper[i]) {
                if l >= u {
                    return Err(Error::InvalidBounds { index: i });
                }
            }
        }
        Ok(Self { lower, upper })
    }

    /// Builds bounds from floats, mapping non-finite values to open ends.
    pub fn from_floats(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let conv = |v: &f64| {
            if v.is_finite() {
                Some(real::<T>(*v))
            } else {
                None
            }
        };
        Self::new(lower.iter().map(conv).collect(), upper.iter().map(conv).collect())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self, i: usize) -> Option<T> {
        self.lower[i]
    }

    pub fn upper(&self, i: usize) -> Option<T> {
        self.upper[i]
    }
}

/// Stage-wise evaluators of the discretized problem.
///
/// `z` is the primal block laid out as `(x, tau, p, w)`; stage indices are
/// zero-based. The stage cost includes the step-length factor and, at the
/// last stage, the merged terminal cost. `dynamics` returns
/// `F_n = f(x_n, tau_n, p_n) dt - x_n`; the dynamics defect seen by the
/// solver is `x_{n-1} + F_n`.
///
/// Implementations must be deterministic and reentrant: the solver may call
/// stages concurrently and expects bit-identical repeated evaluations.
pub trait StageEvaluator<T: Real>: Send + Sync {
    fn cost(&self, n: usize, z: &[T]) -> T;
    fn cost_gradient(&self, n: usize, z: &[T]) -> DVector<T>;
    fn cost_hessian(&self, n: usize, z: &[T]) -> DMatrix<T>;
    fn inequality(&self, n: usize, z: &[T]) -> DVector<T>;
    fn inequality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T>;
    fn equality(&self, n: usize, z: &[T]) -> DVector<T>;
    fn equality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T>;
    fn dynamics(&self, n: usize, z: &[T]) -> DVector<T>;
    fn dynamics_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T>;
    /// Value of the VI function `K` at the stage point.
    fn vi_value(&self, n: usize, z: &[T]) -> DVector<T>;
    /// Weighted second derivative of the constraint part of the Hamiltonian:
    /// `-sum sigma_i d2 G_i + sum eta_j d2 C_j + sum lambda_m d2 F_m`.
    fn constraints_hessian(
        &self,
        n: usize,
        z: &[T],
        sigma: &[T],
        eta: &[T],
        lambda: &[T],
    ) -> DMatrix<T>;
}

/// The discretized OCPEC consumed by the solver.
#[derive(Clone)]
pub struct DiscretizedOcpec<T: Real> {
    dims: Dimensions<T>,
    bounds: BoundData<T>,
    x0: DVector<T>,
    eval: Arc<dyn StageEvaluator<T>>,
}

impl<T: Real> DiscretizedOcpec<T> {
    pub fn new(
        dims: Dimensions<T>,
        bounds: BoundData<T>,
        x0: DVector<T>,
        eval: Arc<dyn StageEvaluator<T>>,
    ) -> Result<Self> {
        if dims.n_w != dims.n_p {
            return Err(Error::DimensionMismatch {
                context: "auxiliary variable count",
                expected: dims.n_p,
                actual: dims.n_w,
            });
        }
        if bounds.len() != dims.n_p {
            return Err(Error::DimensionMismatch {
                context: "bound data length",
                expected: dims.n_p,
                actual: bounds.len(),
            });
        }
        let rule = scholtes::gamma_rows(&bounds);
        if dims.n_gamma != rule {
            return Err(Error::DimensionMismatch {
                context: "relaxed-equilibrium row count",
                expected: rule,
                actual: dims.n_gamma,
            });
        }
        if x0.len() != dims.n_x {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: dims.n_x,
                actual: x0.len(),
            });
        }
        Ok(Self {
            dims,
            bounds,
            x0,
            eval,
        })
    }

    pub fn dims(&self) -> &Dimensions<T> {
        &self.dims
    }

    pub fn bounds(&self) -> &BoundData<T> {
        &self.bounds
    }

    pub fn initial_state(&self) -> &DVector<T> {
        &self.x0
    }

    pub fn evaluator(&self) -> &Arc<dyn StageEvaluator<T>> {
        &self.eval
    }

    pub fn cost(&self, n: usize, z: &[T]) -> T {
        self.eval.cost(n, z)
    }

    pub fn cost_gradient(&self, n: usize, z: &[T]) -> DVector<T> {
        self.eval.cost_gradient(n, z)
    }

    pub fn cost_hessian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.eval.cost_hessian(n, z)
    }

    pub fn inequality(&self, n: usize, z: &[T]) -> DVector<T> {
        self.eval.inequality(n, z)
    }

    pub fn inequality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.eval.inequality_jacobian(n, z)
    }

    pub fn equality(&self, n: usize, z: &[T]) -> DVector<T> {
        self.eval.equality(n, z)
    }

    pub fn equality_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.eval.equality_jacobian(n, z)
    }

    pub fn dynamics(&self, n: usize, z: &[T]) -> DVector<T> {
        self.eval.dynamics(n, z)
    }

    pub fn dynamics_jacobian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        self.eval.dynamics_jacobian(n, z)
    }

    pub fn vi_value(&self, n: usize, z: &[T]) -> DVector<T> {
        self.eval.vi_value(n, z)
    }

    pub fn constraints_hessian(
        &self,
        n: usize,
        z: &[T],
        sigma: &[T],
        eta: &[T],
        lambda: &[T],
    ) -> DMatrix<T> {
        self.eval.constraints_hessian(n, z, sigma, eta, lambda)
    }

    /// Relaxed equilibrium constraint at the stage primal block.
    pub fn phi(&self, z: &[T], s: T) -> Result<DVector<T>> {
        let d = &self.dims;
        scholtes::build_scholtes_phi(
            &z[d.z_p()..d.z_p() + d.n_p],
            &z[d.z_w()..d.z_w() + d.n_w],
            s,
            &self.bounds,
        )
    }

    /// Jacobian of the relaxed constraint embedded over the full primal block.
    pub fn phi_jacobian(&self, z: &[T]) -> Result<DMatrix<T>> {
        let d = &self.dims;
        let compact = scholtes::build_scholtes_jacobian(
            &z[d.z_p()..d.z_p() + d.n_p],
            &z[d.z_w()..d.z_w() + d.n_w],
            &self.bounds,
        )?;
        let mut jac = DMatrix::zeros(d.n_gamma, d.n_z());
        for r in 0..d.n_gamma {
            for i in 0..d.n_p {
                jac[(r, d.z_p() + i)] = compact[(r, i)];
                jac[(r, d.z_w() + i)] = compact[(r, d.n_p + i)];
            }
        }
        Ok(jac)
    }

    /// Adds the `gamma`-weighted relaxed-constraint curvature into a
    /// Hamiltonian Hessian block.
    pub fn add_phi_hessian(&self, hess: &mut DMatrix<T>, gamma: &[T]) -> Result<()> {
        let d = &self.dims;
        let coeff = scholtes::scholtes_cross_coefficients(gamma, &self.bounds)?;
        for i in 0..d.n_p {
            hess[(d.z_p() + i, d.z_w() + i)] += coeff[i];
            hess[(d.z_w() + i, d.z_p() + i)] += coeff[i];
        }
        Ok(())
    }
}

/// Continuous-time DVI pieces: vector field, VI function, and path
/// constraints over `(x, tau, p)`.
///
/// The weighted Hessian hooks default to zero, which is exact for systems
/// whose dynamics and constraints are affine. Nonlinear systems must override
/// them; `check_derivatives` verifies the supplied expressions against finite
/// differences.
pub trait DviSystem<T: Real>: Send + Sync {
    fn n_x(&self) -> usize;
    fn n_tau(&self) -> usize;
    fn n_p(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn n_eq(&self) -> usize {
        0
    }

    fn vector_field(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T>;
    /// Jacobian of the vector field over `(x, tau, p)`.
    fn vector_field_jacobian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T>;
    fn vi_function(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T>;
    fn vi_jacobian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T>;
    fn inequality(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T>;
    fn inequality_jacobian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T>;

    fn equality(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DVector<T> {
        DVector::zeros(0)
    }
    fn equality_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        DMatrix::zeros(0, self.n_x() + self.n_tau() + self.n_p())
    }

    /// `sum_j weights_j d2 f_j` over `(x, tau, p)`.
    fn vector_field_hessian(&self, _x: &[T], _tau: &[T], _p: &[T], _weights: &[T]) -> DMatrix<T> {
        let m = self.n_x() + self.n_tau() + self.n_p();
        DMatrix::zeros(m, m)
    }
    fn vi_hessian(&self, _x: &[T], _tau: &[T], _p: &[T], _weights: &[T]) -> DMatrix<T> {
        let m = self.n_x() + self.n_tau() + self.n_p();
        DMatrix::zeros(m, m)
    }
    fn inequality_hessian(&self, _x: &[T], _tau: &[T], _p: &[T], _weights: &[T]) -> DMatrix<T> {
        let m = self.n_x() + self.n_tau() + self.n_p();
        DMatrix::zeros(m, m)
    }
    fn equality_hessian(&self, _x: &[T], _tau: &[T], _p: &[T], _weights: &[T]) -> DMatrix<T> {
        let m = self.n_x() + self.n_tau() + self.n_p();
        DMatrix::zeros(m, m)
    }
}

/// Continuous-time cost: stage integrand and terminal term, with derivatives
/// over `(x, tau, p)`.
pub trait StageCost<T: Real>: Send + Sync {
    fn stage_cost(&self, t: T, x: &[T], tau: &[T], p: &[T]) -> T;
    fn stage_cost_gradient(&self, t: T, x: &[T], tau: &[T], p: &[T]) -> DVector<T>;
    fn stage_cost_hessian(&self, t: T, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T>;
    fn terminal_cost(&self, x: &[T], tau: &[T], p: &[T]) -> T;
    fn terminal_cost_gradient(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T>;
    fn terminal_cost_hessian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T>;
}

/// Implicit-Euler transcription of a continuous DVI with cost.
///
/// Builds the stage evaluators of the discretized problem: the dynamics
/// become `F_n = f dt - x`, the auxiliary-variable rows `w - K = 0` are
/// appended to the equality block, and the terminal cost is merged into the
/// last stage cost.
pub fn make_discretized<T: Real>(
    system: Arc<dyn DviSystem<T>>,
    cost: Arc<dyn StageCost<T>>,
    bounds: BoundData<T>,
    n_stages: usize,
    dt: T,
    x0: DVector<T>,
) -> Result<DiscretizedOcpec<T>> {
    let n_gamma = scholtes::gamma_rows(&bounds);
    let dims = Dimensions::new(
        system.n_x(),
        system.n_tau(),
        system.n_p(),
        system.n_ineq(),
        system.n_eq() + system.n_p(),
        n_gamma,
        n_stages,
        dt,
    )?;
    let eval = Discretization {
        system,
        cost,
        dims: dims.clone(),
    };
    DiscretizedOcpec::new(dims, bounds, x0, Arc::new(eval))
}

/// Adapter that turns continuous pieces into [`StageEvaluator`] calls.
struct Discretization<T: Real> {
    system: Arc<dyn DviSystem<T>>,
    cost: Arc<dyn StageCost<T>>,
    dims: Dimensions<T>,
}

impl<T: Real> Discretization<T> {
    fn split<'a>(&self, z: &'a [T]) -> (&'a [T], &'a [T], &'a [T], &'a [T]) {
        let d = &self.dims;
        (
            &z[d.z_x()..d.z_x() + d.n_x],
            &z[d.z_tau()..d.z_tau() + d.n_tau],
            &z[d.z_p()..d.z_p() + d.n_p],
            &z[d.z_w()..d.z_w() + d.n_w],
        )
    }

    fn stage_time(&self, n: usize) -> T {
        self.dims.dt * real::<T>((n + 1) as f64)
    }

    /// Number of columns of the continuous-piece derivative blocks.
    fn n_xtp(&self) -> usize {
        self.dims.n_x + self.dims.n_tau + self.dims.n_p
    }

    fn is_last(&self, n: usize) -> bool {
        n + 1 == self.dims.n_stages
    }

    /// Embeds a gradient over `(x, tau, p)` into the full primal block.
    fn embed_gradient(&self, g: DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dims.n_z());
        out.rows_mut(0, self.n_xtp()).copy_from(&g);
        out
    }

    fn embed_hessian(&self, h: &DMatrix<T>, out: &mut DMatrix<T>, scale: T) {
        let m = self.n_xtp();
        for r in 0..m {
            for c in 0..m {
                out[(r, c)] += h[(r, c)] * scale;
            }
        }
    }
}

impl<T: Real> StageEvaluator<T> for Discretization<T> {
    fn cost(&self, n: usize, z: &[T]) -> T {
        let (x, tau, p, _) = self.split(z);
        let mut value = self.cost.stage_cost(self.stage_time(n), x, tau, p) * self.dims.dt;
        if self.is_last(n) {
            value += self.cost.terminal_cost(x, tau, p);
        }
        value
    }

    fn cost_gradient(&self, n: usize, z: &[T]) -> DVector<T> {
        let (x, tau, p, _) = self.split(z);
        let mut g = self.cost.stage_cost_gradient(self.stage_time(n), x, tau, p) * self.dims.dt;
        if self.is_last(n) {
            g += self.cost.terminal_cost_gradient(x, tau, p);
        }
        self.embed_gradient(g)
    }

    fn cost_hessian(&self, n: usize, z: &[T]) -> DMatrix<T> {
        let (x, tau, p, _) = self.split(z);
        let mut out = DMatrix::zeros(self.dims.n_z(), self.dims.n_z());
        let h = self.cost.stage_cost_hessian(self.stage_time(n), x, tau, p);
        self.embed_hessian(&h, &mut out, self.dims.dt);
        if self.is_last(n) {
            let ht = self.cost.terminal_cost_hessian(x, tau, p);
            self.embed_hessian(&ht, &mut out, T::one());
        }
        out
    }

    fn inequality(&self, _n: usize, z: &[T]) -> DVector<T> {
        let (x, tau, p, _) = self.split(z);
        self.system.inequality(x, tau, p)
    }

    fn inequality_jacobian(&self, _n: usize, z: &[T]) -> DMatrix<T> {
        let (x, tau, p, _) = self.split(z);
        let jac = self.system.inequality_jacobian(x, tau, p);
        let mut out = DMatrix::zeros(self.dims.n_sigma, self.dims.n_z());
        out.view_mut((0, 0), (self.dims.n_sigma, self.n_xtp()))
            .copy_from(&jac);
        out
    }

    fn equality(&self, _n: usize, z: &[T]) -> DVector<T> {
        let d = &self.dims;
        let (x, tau, p, w) = self.split(z);
        let c = self.system.equality(x, tau, p);
        let k = self.system.vi_function(x, tau, p);
        let mut out = DVector::zeros(d.n_eta);
        let n_eq = d.n_eta - d.n_p;
        out.rows_mut(0, n_eq).copy_from(&c);
        for i in 0..d.n_p {
            out[n_eq + i] = w[i] - k[i];
        }
        out
    }

    fn equality_jacobian(&self, _n: usize, z: &[T]) -> DMatrix<T> {
        let d = &self.dims;
        let (x, tau, p, _) = self.split(z);
        let n_eq = d.n_eta - d.n_p;
        let mut out = DMatrix::zeros(d.n_eta, d.n_z());
        if n_eq > 0 {
            let cj = self.system.equality_jacobian(x, tau, p);
            out.view_mut((0, 0), (n_eq, self.n_xtp())).copy_from(&cj);
        }
        let kj = self.system.vi_jacobian(x, tau, p);
        for i in 0..d.n_p {
            for c in 0..self.n_xtp() {
                out[(n_eq + i, c)] = -kj[(i, c)];
            }
            out[(n_eq + i, d.z_w() + i)] = T::one();
        }
        out
    }

    fn dynamics(&self, _n: usize, z: &[T]) -> DVector<T> {
        let (x, tau, p, _) = self.split(z);
        let mut f = self.system.vector_field(x, tau, p) * self.dims.dt;
        for i in 0..self.dims.n_x {
            f[i] -= x[i];
        }
        f
    }

    fn dynamics_jacobian(&self, _n: usize, z: &[T]) -> DMatrix<T> {
        let d = &self.dims;
        let (x, tau, p, _) = self.split(z);
        let fj = self.system.vector_field_jacobian(x, tau, p) * d.dt;
        let mut out = DMatrix::zeros(d.n_x, d.n_z());
        out.view_mut((0, 0), (d.n_x, self.n_xtp())).copy_from(&fj);
        for i in 0..d.n_x {
            out[(i, i)] -= T::one();
        }
        out
    }

    fn vi_value(&self, _n: usize, z: &[T]) -> DVector<T> {
        let (x, tau, p, _) = self.split(z);
        self.system.vi_function(x, tau, p)
    }

    fn constraints_hessian(
        &self,
        _n: usize,
        z: &[T],
        sigma: &[T],
        eta: &[T],
        lambda: &[T],
    ) -> DMatrix<T> {
        let d = &self.dims;
        let (x, tau, p, _) = self.split(z);
        let n_eq = d.n_eta - d.n_p;
        let mut out = DMatrix::zeros(d.n_z(), d.n_z());
        // -sigma-weighted inequality curvature
        let hg = self.system.inequality_hessian(x, tau, p, sigma);
        self.embed_hessian(&hg, &mut out, -T::one());
        // +eta-weighted continuous equality curvature
        if n_eq > 0 {
            let hc = self.system.equality_hessian(x, tau, p, &eta[0..n_eq]);
            self.embed_hessian(&hc, &mut out, T::one());
        }
        // auxiliary rows w - K contribute -eta_k-weighted K curvature
        let hk = self.system.vi_hessian(x, tau, p, &eta[n_eq..]);
        self.embed_hessian(&hk, &mut out, -T::one());
        // +lambda-weighted dynamics curvature, scaled by dt from F = f dt - x
        let hf = self.system.vector_field_hessian(x, tau, p, lambda);
        self.embed_hessian(&hf, &mut out, d.dt);
        out
    }
}

pub use fd::{check_derivatives, DerivativeReport};
pub use scholtes::{build_scholtes_jacobian, build_scholtes_phi, gamma_rows};
