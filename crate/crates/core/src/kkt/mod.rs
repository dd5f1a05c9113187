//! KKT residual and block-matrix assembly.
//!
//! The complementarity rows of the KKT conditions are mapped to equations by
//! the smoothed Fischer-Burmeister function; Newton's method on the mapped
//! system produces, after scaling each FB row by the negative inverse of its
//! own diagonal, a block-tridiagonal matrix with symmetric diagonal blocks.
//! Stage `n` couples to its neighbours only through the identity blocks that
//! feed `x_{n-1}` into the dynamics rows and `lambda_{n+1}` into the
//! `x`-gradient rows.

pub mod fb;
pub mod iterate;

use nalgebra::{DMatrix, DVector};

use crate::num::{is_finite, real, Real};
use crate::problem::{Dimensions, DiscretizedOcpec};
use crate::{Error, Result};

pub use fb::{fb, fb_grad};
pub use iterate::{stagewise_norm_inf, Iterate, Perturbation};

/// Raw constraint and cost values of one stage at a given iterate.
#[derive(Debug, Clone)]
pub struct StageValues<T: Real> {
    pub cost: T,
    pub inequality: DVector<T>,
    pub equality: DVector<T>,
    /// Dynamics defect `x_{n-1} + F_n`.
    pub defect: DVector<T>,
    pub phi: DVector<T>,
}

/// Cost, constraint violation, and raw values over the whole horizon;
/// the light-weight evaluation used for merit-function trials.
#[derive(Debug, Clone)]
pub struct MeritData<T: Real> {
    pub cost: T,
    /// Per-stage l1 constraint violation `M_n`.
    pub violation_stage: Vec<T>,
    /// Total violation `sum M_n`.
    pub violation: T,
    /// Infinity norm of the unscaled primal residual blocks.
    pub primal_inf: T,
    pub values: Vec<StageValues<T>>,
}

/// KKT residual stored stage-wise, rows ordered per stage as: scaled FB rows
/// for `(sigma, G)`, equality rows, dynamics defect, scaled FB rows for
/// `(gamma, Phi)`, then the Hamiltonian gradient.
#[derive(Debug, Clone)]
pub struct KktResidual<T: Real> {
    pub stages: Vec<DVector<T>>,
    /// Per-entry factor `f` with `T_fb = -f * psi` for the `(sigma, G)` rows;
    /// reused by the second-order correction.
    pub fb_factor_g: Vec<DVector<T>>,
    /// Same for the `(gamma, Phi)` rows.
    pub fb_factor_phi: Vec<DVector<T>>,
}

impl<T: Real> KktResidual<T> {
    pub fn norm_inf(&self) -> T {
        stagewise_norm_inf(&self.stages)
    }
}

/// Block-tridiagonal KKT matrix: owned diagonal blocks, implicit couplers.
#[derive(Debug, Clone)]
pub struct KktMatrix<T: Real> {
    pub blocks: Vec<DMatrix<T>>,
    pub dims: Dimensions<T>,
}

/// Everything the outer iteration needs about the current iterate.
#[derive(Debug, Clone)]
pub struct ResidualBundle<T: Real> {
    pub residual: KktResidual<T>,
    pub primal_inf: T,
    pub dual_inf: T,
    pub cost: T,
    pub violation_stage: Vec<T>,
    pub violation: T,
    /// Stage cost gradients, kept for the penalty-parameter update.
    pub cost_gradients: Vec<DVector<T>>,
}

impl<T: Real> ResidualBundle<T> {
    pub fn kkt_inf(&self) -> T {
        self.residual.norm_inf()
    }
}

fn ensure_finite_vec<T: Real>(v: &DVector<T>, stage: usize, what: &'static str) -> Result<()> {
    if v.iter().any(|&e| !is_finite(e)) {
        return Err(Error::EvaluatorFailure { stage, what });
    }
    Ok(())
}

fn ensure_finite_mat<T: Real>(m: &DMatrix<T>, stage: usize, what: &'static str) -> Result<()> {
    if m.iter().any(|&e| !is_finite(e)) {
        return Err(Error::EvaluatorFailure { stage, what });
    }
    Ok(())
}

/// Evaluates cost and raw constraint values at one stage.
pub fn eval_stage_values<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    n: usize,
    s: T,
) -> Result<StageValues<T>> {
    let z = y.z(n);
    let cost = problem.cost(n, z);
    if !is_finite(cost) {
        return Err(Error::EvaluatorFailure { stage: n, what: "cost" });
    }
    let inequality = problem.inequality(n, z);
    ensure_finite_vec(&inequality, n, "inequality")?;
    let equality = problem.equality(n, z);
    ensure_finite_vec(&equality, n, "equality")?;
    let x_prev: &[T] = if n == 0 {
        problem.initial_state().as_slice()
    } else {
        y.x(n - 1)
    };
    let mut defect = problem.dynamics(n, z);
    for i in 0..defect.len() {
        defect[i] += x_prev[i];
    }
    ensure_finite_vec(&defect, n, "dynamics")?;
    let phi = problem.phi(z, s)?;
    ensure_finite_vec(&phi, n, "relaxed equilibrium")?;
    Ok(StageValues {
        cost,
        inequality,
        equality,
        defect,
        phi,
    })
}

fn fb_values<T: Real>(a: &[T], b: &DVector<T>, z: T) -> DVector<T> {
    DVector::from_iterator(a.len(), a.iter().zip(b.iter()).map(|(&ai, &bi)| fb(ai, bi, z)))
}

/// Evaluates merit-function data (cost, violation, raw values) at an iterate.
pub fn eval_merit_data<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
) -> Result<MeritData<T>> {
    let n_stages = problem.dims().n_stages;
    let mut values = Vec::with_capacity(n_stages);
    let mut cost = T::zero();
    let mut violation_stage = Vec::with_capacity(n_stages);
    let mut violation = T::zero();
    let mut primal_inf = T::zero();
    for n in 0..n_stages {
        let vals = eval_stage_values(problem, y, n, pert.s)?;
        let psi_g = fb_values(y.sigma(n), &vals.inequality, pert.z);
        let psi_phi = fb_values(y.gamma(n), &vals.phi, pert.z);
        let mut m = T::zero();
        for &e in psi_g.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in vals.equality.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in vals.defect.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in psi_phi.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        cost += vals.cost;
        violation += m;
        violation_stage.push(m);
        values.push(vals);
    }
    Ok(MeritData {
        cost,
        violation_stage,
        violation,
        primal_inf,
        values,
    })
}

/// Diagonal entry of the scaled FB row and the residual factor.
///
/// For a pair `(a, b)` with radius `r = sqrt(a^2 + b^2 + z^2)` and
/// regularization `reg`, the Newton row of `psi = 0` scaled by the negative
/// inverse of its `b`-derivative has diagonal `d = -(a - r - reg)/(b - r - reg)`
/// and right-hand side `-f * psi` with `f = r / (b - r - reg)`.
fn fb_row<T: Real>(a: T, b: T, z: T, reg: T) -> Option<(T, T)> {
    let r = (a * a + b * b + z * z).sqrt();
    let denom = b - r - reg;
    if denom == T::zero() {
        return None;
    }
    Some((-(a - r - reg) / denom, r / denom))
}

struct StageSystem<T: Real> {
    diag_g: DVector<T>,
    factor_g: DVector<T>,
    diag_phi: DVector<T>,
    factor_phi: DVector<T>,
    psi_g: DVector<T>,
    psi_phi: DVector<T>,
    g_jac: DMatrix<T>,
    c_jac: DMatrix<T>,
    f_jac: DMatrix<T>,
    phi_jac: DMatrix<T>,
    h_grad: DVector<T>,
    cost_grad: DVector<T>,
    values: StageValues<T>,
}

fn eval_stage_system<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    n: usize,
    pert: Perturbation<T>,
    reg_fb: T,
) -> Result<StageSystem<T>> {
    let d = problem.dims();
    let z = y.z(n);
    let values = eval_stage_values(problem, y, n, pert.s)?;
    let psi_g = fb_values(y.sigma(n), &values.inequality, pert.z);
    let psi_phi = fb_values(y.gamma(n), &values.phi, pert.z);

    let mut diag_g = DVector::zeros(d.n_sigma);
    let mut factor_g = DVector::zeros(d.n_sigma);
    for i in 0..d.n_sigma {
        let (diag, factor) = fb_row(y.sigma(n)[i], values.inequality[i], pert.z, reg_fb)
            .ok_or(Error::SingularFbScaling { stage: n })?;
        diag_g[i] = diag;
        factor_g[i] = factor;
    }
    let mut diag_phi = DVector::zeros(d.n_gamma);
    let mut factor_phi = DVector::zeros(d.n_gamma);
    for i in 0..d.n_gamma {
        let (diag, factor) = fb_row(y.gamma(n)[i], values.phi[i], pert.z, reg_fb)
            .ok_or(Error::SingularFbScaling { stage: n })?;
        diag_phi[i] = diag;
        factor_phi[i] = factor;
    }

    let g_jac = problem.inequality_jacobian(n, z);
    ensure_finite_mat(&g_jac, n, "inequality jacobian")?;
    let c_jac = problem.equality_jacobian(n, z);
    ensure_finite_mat(&c_jac, n, "equality jacobian")?;
    let f_jac = problem.dynamics_jacobian(n, z);
    ensure_finite_mat(&f_jac, n, "dynamics jacobian")?;
    let phi_jac = problem.phi_jacobian(z)?;
    let cost_grad = problem.cost_gradient(n, z);
    ensure_finite_vec(&cost_grad, n, "cost gradient")?;

    // Hamiltonian gradient: grad L - Jg' sigma + Jc' eta + Jf' lambda - Jphi' gamma,
    // plus lambda_{n+1} on the x rows (zero at the last stage).
    let mut h_grad = cost_grad.clone();
    h_grad.gemv_tr(-T::one(), &g_jac, &DVector::from_column_slice(y.sigma(n)), T::one());
    h_grad.gemv_tr(T::one(), &c_jac, &DVector::from_column_slice(y.eta(n)), T::one());
    h_grad.gemv_tr(T::one(), &f_jac, &DVector::from_column_slice(y.lambda(n)), T::one());
    h_grad.gemv_tr(-T::one(), &phi_jac, &DVector::from_column_slice(y.gamma(n)), T::one());
    if n + 1 < d.n_stages {
        let lambda_next = y.lambda(n + 1);
        for i in 0..d.n_x {
            h_grad[d.z_x() + i] += lambda_next[i];
        }
    }

    Ok(StageSystem {
        diag_g,
        factor_g,
        diag_phi,
        factor_phi,
        psi_g,
        psi_phi,
        g_jac,
        c_jac,
        f_jac,
        phi_jac,
        h_grad,
        cost_grad,
        values,
    })
}

fn residual_from_system<T: Real>(d: &Dimensions<T>, sys: &StageSystem<T>) -> DVector<T> {
    let mut t = DVector::zeros(d.n_y());
    for i in 0..d.n_sigma {
        t[d.o_sigma() + i] = -sys.factor_g[i] * sys.psi_g[i];
    }
    for i in 0..d.n_eta {
        t[d.o_eta() + i] = sys.values.equality[i];
    }
    for i in 0..d.n_x {
        t[d.o_lambda() + i] = sys.values.defect[i];
    }
    for i in 0..d.n_gamma {
        t[d.o_gamma() + i] = -sys.factor_phi[i] * sys.psi_phi[i];
    }
    for i in 0..d.n_z() {
        t[d.o_z() + i] = sys.h_grad[i];
    }
    t
}

fn block_from_system<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    n: usize,
    reg_eq: T,
    sys: &StageSystem<T>,
) -> Result<DMatrix<T>> {
    let d = problem.dims();
    let n_y = d.n_y();
    let mut j = DMatrix::zeros(n_y, n_y);

    for i in 0..d.n_sigma {
        j[(d.o_sigma() + i, d.o_sigma() + i)] = sys.diag_g[i];
    }
    for i in 0..d.n_eta + d.n_x {
        j[(d.o_eta() + i, d.o_eta() + i)] = -reg_eq;
    }
    for i in 0..d.n_gamma {
        j[(d.o_gamma() + i, d.o_gamma() + i)] = sys.diag_phi[i];
    }

    let o_z = d.o_z();
    for r in 0..d.n_sigma {
        for c in 0..d.n_z() {
            let v = -sys.g_jac[(r, c)];
            j[(d.o_sigma() + r, o_z + c)] = v;
            j[(o_z + c, d.o_sigma() + r)] = v;
        }
    }
    for r in 0..d.n_eta {
        for c in 0..d.n_z() {
            let v = sys.c_jac[(r, c)];
            j[(d.o_eta() + r, o_z + c)] = v;
            j[(o_z + c, d.o_eta() + r)] = v;
        }
    }
    for r in 0..d.n_x {
        for c in 0..d.n_z() {
            let v = sys.f_jac[(r, c)];
            j[(d.o_lambda() + r, o_z + c)] = v;
            j[(o_z + c, d.o_lambda() + r)] = v;
        }
    }
    for r in 0..d.n_gamma {
        for c in 0..d.n_z() {
            let v = -sys.phi_jac[(r, c)];
            j[(d.o_gamma() + r, o_z + c)] = v;
            j[(o_z + c, d.o_gamma() + r)] = v;
        }
    }

    let z = y.z(n);
    let mut hess = problem.cost_hessian(n, z);
    hess += problem.constraints_hessian(n, z, y.sigma(n), y.eta(n), y.lambda(n));
    problem.add_phi_hessian(&mut hess, y.gamma(n))?;
    ensure_finite_mat(&hess, n, "hamiltonian hessian")?;
    for r in 0..d.n_z() {
        for c in 0..d.n_z() {
            j[(o_z + r, o_z + c)] += hess[(r, c)];
        }
    }
    Ok(j)
}

fn build_system<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
    reg_eq: T,
    reg_fb: T,
    with_matrix: bool,
) -> Result<(Option<KktMatrix<T>>, ResidualBundle<T>)> {
    let d = problem.dims();
    let n_stages = d.n_stages;
    let mut stages = Vec::with_capacity(n_stages);
    let mut factors_g = Vec::with_capacity(n_stages);
    let mut factors_phi = Vec::with_capacity(n_stages);
    let mut blocks = Vec::with_capacity(if with_matrix { n_stages } else { 0 });
    let mut cost = T::zero();
    let mut violation_stage = Vec::with_capacity(n_stages);
    let mut violation = T::zero();
    let mut primal_inf = T::zero();
    let mut dual_raw = T::zero();
    let mut cost_gradients = Vec::with_capacity(n_stages);

    for n in 0..n_stages {
        let sys = eval_stage_system(problem, y, n, pert, reg_fb)?;
        let t = residual_from_system(d, &sys);
        if with_matrix {
            blocks.push(block_from_system(problem, y, n, reg_eq, &sys)?);
        }

        let mut m = T::zero();
        for &e in sys.psi_g.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in sys.values.equality.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in sys.values.defect.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in sys.psi_phi.iter() {
            m += e.abs();
            primal_inf = primal_inf.max(e.abs());
        }
        for &e in sys.h_grad.iter() {
            dual_raw = dual_raw.max(e.abs());
        }

        cost += sys.values.cost;
        violation_stage.push(m);
        violation += m;
        cost_gradients.push(sys.cost_grad.clone());
        factors_g.push(sys.factor_g.clone());
        factors_phi.push(sys.factor_phi.clone());
        stages.push(t);
    }

    let dual_inf = dual_raw / dual_scaling(y);
    let residual = KktResidual {
        stages,
        fb_factor_g: factors_g,
        fb_factor_phi: factors_phi,
    };
    let matrix = with_matrix.then(|| KktMatrix {
        blocks,
        dims: d.clone(),
    });
    Ok((
        matrix,
        ResidualBundle {
            residual,
            primal_inf,
            dual_inf,
            cost,
            violation_stage,
            violation,
            cost_gradients,
        },
    ))
}

/// Threshold of the dual-based scaling applied to the dual infeasibility.
pub const DUAL_SCALE_THRESHOLD: f64 = 100.0;

fn dual_scaling<T: Real>(y: &Iterate<T>) -> T {
    let s_max = real::<T>(DUAL_SCALE_THRESHOLD);
    let count = real::<T>(y.dual_count().max(1) as f64);
    s_max.max(y.dual_l1_norm() / count) / s_max
}

/// KKT residual of the mapped system at the iterate.
pub fn eval_kkt_residual<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
    reg_fb: T,
) -> Result<KktResidual<T>> {
    build_system(problem, y, pert, T::zero(), reg_fb, false).map(|(_, b)| b.residual)
}

/// Diagonal KKT blocks at the iterate.
pub fn assemble_kkt_blocks<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
    reg_eq: T,
    reg_fb: T,
) -> Result<KktMatrix<T>> {
    build_system(problem, y, pert, reg_eq, reg_fb, true).map(|(m, _)| m.unwrap())
}

/// Matrix and residual in one pass; the driver's per-iteration evaluation.
pub fn assemble_system<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
    reg_eq: T,
    reg_fb: T,
) -> Result<(KktMatrix<T>, ResidualBundle<T>)> {
    build_system(problem, y, pert, reg_eq, reg_fb, true).map(|(m, b)| (m.unwrap(), b))
}

/// Primal and scaled dual infeasibility at the iterate.
///
/// The primal part is the infinity norm over the equality rows, dynamics
/// defects, and unscaled FB values; the dual part is the infinity norm of
/// the Hamiltonian gradient divided by a dual-magnitude scaling bounded
/// below by one.
pub fn eval_infeasibilities<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    pert: Perturbation<T>,
) -> Result<(T, T)> {
    let (_, bundle) = build_system(problem, y, pert, T::zero(), T::zero(), false)?;
    Ok((bundle.primal_inf, bundle.dual_inf))
}

/// Writes the residual and the diagonal blocks in a plain text format, one
/// stage per record, for cross-checking against independent tooling.
pub fn dump_kkt<T: Real, W: std::io::Write>(
    matrix: &KktMatrix<T>,
    residual: &KktResidual<T>,
    out: &mut W,
) -> std::io::Result<()> {
    for n in 0..matrix.blocks.len() {
        writeln!(out, "stage {n}")?;
        write!(out, "residual")?;
        for e in residual.stages[n].iter() {
            write!(out, " {:.17e}", e.to_f64().unwrap_or(f64::NAN))?;
        }
        writeln!(out)?;
        let b = &matrix.blocks[n];
        for r in 0..b.nrows() {
            write!(out, "row {r}")?;
            for c in 0..b.ncols() {
                write!(out, " {:.17e}", b[(r, c)].to_f64().unwrap_or(f64::NAN))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
