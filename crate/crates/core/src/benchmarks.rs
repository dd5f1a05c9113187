//! Reproducible test problems, solution-quality metrics, mode-sequence
//! extraction, and seeded random starts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kkt::Iterate;
use crate::num::{real, Real};
use crate::problem::{make_discretized, BoundData, DiscretizedOcpec, DviSystem, StageCost};
use crate::Result;

/// Reference trajectory of the quadratic cost.
#[derive(Debug, Clone)]
pub enum RefTrajectory<T: Real> {
    Constant(DVector<T>),
    /// Linear interpolation from `from` at `t = 0` to `to` at `t = duration`.
    Interpolated {
        from: DVector<T>,
        to: DVector<T>,
        duration: T,
    },
}

impl<T: Real> RefTrajectory<T> {
    fn at(&self, t: T) -> DVector<T> {
        match self {
            RefTrajectory::Constant(v) => v.clone(),
            RefTrajectory::Interpolated { from, to, duration } => {
                let a = (t / *duration).clamp(T::zero(), T::one());
                from * (T::one() - a) + to * a
            }
        }
    }
}

/// Quadratic cost with positive diagonal weights:
/// stage `(x - x_ref)' Qx (x - x_ref) + tau' Qtau tau + p' Qp p`,
/// terminal `(x - x_e)' QT (x - x_e)`.
#[derive(Debug, Clone)]
pub struct QuadraticCostSpec<T: Real> {
    pub q_terminal: DVector<T>,
    pub q_state: DVector<T>,
    pub q_control: DVector<T>,
    pub q_equilibrium: DVector<T>,
    pub x_terminal: DVector<T>,
    pub x_ref: RefTrajectory<T>,
}

impl<T: Real> StageCost<T> for QuadraticCostSpec<T> {
    fn stage_cost(&self, t: T, x: &[T], tau: &[T], p: &[T]) -> T {
        let r = self.x_ref.at(t);
        let mut acc = T::zero();
        for i in 0..x.len() {
            let e = x[i] - r[i];
            acc += self.q_state[i] * e * e;
        }
        for i in 0..tau.len() {
            acc += self.q_control[i] * tau[i] * tau[i];
        }
        for i in 0..p.len() {
            acc += self.q_equilibrium[i] * p[i] * p[i];
        }
        acc
    }

    fn stage_cost_gradient(&self, t: T, x: &[T], tau: &[T], p: &[T]) -> DVector<T> {
        let two = real::<T>(2.0);
        let r = self.x_ref.at(t);
        let mut g = DVector::zeros(x.len() + tau.len() + p.len());
        for i in 0..x.len() {
            g[i] = two * self.q_state[i] * (x[i] - r[i]);
        }
        for i in 0..tau.len() {
            g[x.len() + i] = two * self.q_control[i] * tau[i];
        }
        for i in 0..p.len() {
            g[x.len() + tau.len() + i] = two * self.q_equilibrium[i] * p[i];
        }
        g
    }

    fn stage_cost_hessian(&self, _t: T, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T> {
        let two = real::<T>(2.0);
        let m = x.len() + tau.len() + p.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..x.len() {
            h[(i, i)] = two * self.q_state[i];
        }
        for i in 0..tau.len() {
            h[(x.len() + i, x.len() + i)] = two * self.q_control[i];
        }
        for i in 0..p.len() {
            let at = x.len() + tau.len() + i;
            h[(at, at)] = two * self.q_equilibrium[i];
        }
        h
    }

    fn terminal_cost(&self, x: &[T], _tau: &[T], _p: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..x.len() {
            let e = x[i] - self.x_terminal[i];
            acc += self.q_terminal[i] * e * e;
        }
        acc
    }

    fn terminal_cost_gradient(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T> {
        let two = real::<T>(2.0);
        let mut g = DVector::zeros(x.len() + tau.len() + p.len());
        for i in 0..x.len() {
            g[i] = two * self.q_terminal[i] * (x[i] - self.x_terminal[i]);
        }
        g
    }

    fn terminal_cost_hessian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T> {
        let two = real::<T>(2.0);
        let m = x.len() + tau.len() + p.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..x.len() {
            h[(i, i)] = two * self.q_terminal[i];
        }
        h
    }
}

/// Componentwise box limits generating the path inequality rows: for every
/// state then control component, a lower row `v - lo` and an upper row
/// `hi - v`.
#[derive(Debug, Clone)]
pub struct BoxLimits<T: Real> {
    pub state_lo: DVector<T>,
    pub state_hi: DVector<T>,
    pub control_lo: DVector<T>,
    pub control_hi: DVector<T>,
}

impl<T: Real> BoxLimits<T> {
    fn rows(&self) -> usize {
        2 * (self.state_lo.len() + self.control_lo.len())
    }

    fn values(&self, x: &[T], tau: &[T]) -> DVector<T> {
        let mut g = DVector::zeros(self.rows());
        let mut r = 0;
        for i in 0..x.len() {
            g[r] = x[i] - self.state_lo[i];
            g[r + 1] = self.state_hi[i] - x[i];
            r += 2;
        }
        for i in 0..tau.len() {
            g[r] = tau[i] - self.control_lo[i];
            g[r + 1] = self.control_hi[i] - tau[i];
            r += 2;
        }
        g
    }

    fn jacobian(&self, n_x: usize, n_tau: usize, n_p: usize) -> DMatrix<T> {
        let mut j = DMatrix::zeros(self.rows(), n_x + n_tau + n_p);
        let mut r = 0;
        for i in 0..n_x {
            j[(r, i)] = T::one();
            j[(r + 1, i)] = -T::one();
            r += 2;
        }
        for i in 0..n_tau {
            j[(r, n_x + i)] = T::one();
            j[(r + 1, n_x + i)] = -T::one();
            r += 2;
        }
        j
    }
}

// ---------------------------------------------------------------------------
// Affine DVI benchmark
// ---------------------------------------------------------------------------

/// Two-state affine system with a scalar equilibrium variable on `[-1, 1]`.
struct AffineDviSystem<T: Real> {
    boxes: BoxLimits<T>,
}

impl<T: Real> DviSystem<T> for AffineDviSystem<T> {
    fn n_x(&self) -> usize {
        2
    }
    fn n_tau(&self) -> usize {
        1
    }
    fn n_p(&self) -> usize {
        1
    }
    fn n_ineq(&self) -> usize {
        self.boxes.rows()
    }

    fn vector_field(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T> {
        let c = |v: f64| real::<T>(v);
        DVector::from_vec(vec![
            c(1.0) * x[0] + c(-3.0) * x[1] + c(4.0) * tau[0] + c(-3.0) * p[0],
            c(-8.0) * x[0] + c(10.0) * x[1] + c(8.0) * tau[0] + c(-1.0) * p[0],
        ])
    }

    fn vector_field_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        DMatrix::from_row_slice(2, 4, &[1.0, -3.0, 4.0, -3.0, -8.0, 10.0, 8.0, -1.0])
            .map(|v| real::<T>(v))
    }

    fn vi_function(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T> {
        let c = |v: f64| real::<T>(v);
        DVector::from_vec(vec![
            c(1.0) * x[0] + c(-3.0) * x[1] + c(3.0) * tau[0] + c(5.0) * p[0],
        ])
    }

    fn vi_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        DMatrix::from_row_slice(1, 4, &[1.0, -3.0, 3.0, 5.0]).map(|v| real::<T>(v))
    }

    fn inequality(&self, x: &[T], tau: &[T], _p: &[T]) -> DVector<T> {
        self.boxes.values(x, tau)
    }

    fn inequality_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        self.boxes.jacobian(2, 1, 1)
    }
}

/// Default weights of the affine benchmark. The reference data pin only the
/// dynamics, bounds, and horizon; the weights are chosen to reproduce the
/// documented mode-switch times.
pub fn affine_dvi_cost<T: Real>() -> QuadraticCostSpec<T> {
    QuadraticCostSpec {
        q_terminal: DVector::from_vec(vec![real(20.0), real(20.0)]),
        q_state: DVector::from_vec(vec![real(20.0), real(20.0)]),
        q_control: DVector::from_vec(vec![real(1.0)]),
        q_equilibrium: DVector::from_vec(vec![real(0.1)]),
        x_terminal: DVector::zeros(2),
        x_ref: RefTrajectory::Constant(DVector::zeros(2)),
    }
}

/// Default box limits of the affine benchmark. The state box stays inactive;
/// the control box is part of the benchmark definition and shapes the length
/// of the equilibrium mode intervals.
pub fn affine_dvi_boxes<T: Real>() -> BoxLimits<T> {
    BoxLimits {
        state_lo: DVector::from_element(2, real(-5.0)),
        state_hi: DVector::from_element(2, real(5.0)),
        control_lo: DVector::from_element(1, real(-2.0)),
        control_hi: DVector::from_element(1, real(2.0)),
    }
}

/// Affine DVI benchmark problem.
pub fn affine_dvi<T: Real>(
    n_stages: usize,
    dt: T,
    cost: QuadraticCostSpec<T>,
    boxes: BoxLimits<T>,
) -> Result<DiscretizedOcpec<T>> {
    let bounds = BoundData::new(vec![Some(real(-1.0))], vec![Some(real(1.0))])?;
    let x0 = DVector::from_vec(vec![real(-0.5), real(-1.0)]);
    make_discretized(
        Arc::new(AffineDviSystem { boxes }),
        Arc::new(cost),
        bounds,
        n_stages,
        dt,
        x0,
    )
}

/// Affine DVI with the documented defaults (`N = 100`, `dt = 0.01`).
pub fn affine_dvi_default<T: Real>() -> Result<DiscretizedOcpec<T>> {
    affine_dvi(100, real(0.01), affine_dvi_cost(), affine_dvi_boxes())
}

// ---------------------------------------------------------------------------
// Cart pole with friction
// ---------------------------------------------------------------------------

/// Physical parameters of the cart pole with Coulomb friction between cart
/// and ground.
#[derive(Debug, Clone)]
pub struct CartPoleParams<T: Real> {
    pub m_cart: T,
    pub m_pole: T,
    pub pole_length: T,
    pub gravity: T,
    pub friction_coeff: T,
}

impl<T: Real> Default for CartPoleParams<T> {
    fn default() -> Self {
        Self {
            m_cart: real(1.0),
            m_pole: real(0.1),
            pole_length: real(0.5),
            gravity: real(9.81),
            friction_coeff: real(0.4),
        }
    }
}

impl<T: Real> CartPoleParams<T> {
    /// Friction-force bound `mu (m_c + m_p) g`.
    pub fn friction_bound(&self) -> T {
        self.friction_coeff * (self.m_cart + self.m_pole) * self.gravity
    }
}

/// One acceleration expressed as a quotient `n / d`, with first and second
/// partials over `(theta, omega, F)` obtained by the quotient rule.
#[derive(Clone, Copy)]
struct Quotient<T> {
    value: T,
    d1: [T; 3],
    /// Upper triangle `(tt, to, tf, oo, of, ff)`.
    d2: [T; 6],
}

fn quotient_derivatives<T: Real>(
    n: T,
    n1: [T; 3],
    n2: [T; 6],
    d: T,
    d_th: T,
    d_thth: T,
) -> Quotient<T> {
    let q = n / d;
    // q_i = (n_i - q d_i) / d, with d depending on theta only
    let q_th = (n1[0] - q * d_th) / d;
    let q_om = n1[1] / d;
    let q_f = n1[2] / d;
    // q_ij = (n_ij - q_i d_j - q_j d_i - q d_ij) / d
    let tt = (n2[0] - q_th * d_th - q_th * d_th - q * d_thth) / d;
    let to = (n2[1] - q_om * d_th) / d;
    let tf = (n2[2] - q_f * d_th) / d;
    let oo = n2[3] / d;
    let of = n2[4] / d;
    let ff = n2[5] / d;
    Quotient {
        value: q,
        d1: [q_th, q_om, q_f],
        d2: [tt, to, tf, oo, of, ff],
    }
}

struct CartPoleSystem<T: Real> {
    params: CartPoleParams<T>,
    boxes: BoxLimits<T>,
}

impl<T: Real> CartPoleSystem<T> {
    /// Cart and pole angular accelerations with their partials over
    /// `(theta, omega, F)` where `F = tau_c + p`.
    fn accelerations(&self, theta: T, omega: T, f_total: T) -> (Quotient<T>, Quotient<T>) {
        let pr = &self.params;
        let (mc, mp, l, g) = (pr.m_cart, pr.m_pole, pr.pole_length, pr.gravity);
        let one = T::one();
        let two = real::<T>(2.0);
        let (s, c) = (theta.sin(), theta.cos());
        let s2 = two * s * c; // sin(2 theta)
        let c2 = c * c - s * s; // cos(2 theta)

        let den = mc + mp * s * s;
        let den_th = mp * s2;
        let den_thth = two * mp * c2;

        // cart acceleration: n_v / den
        let n_v = f_total + mp * s * (l * omega * omega + g * c);
        let n_v1 = [
            mp * (l * omega * omega * c + g * c2),
            two * mp * l * omega * s,
            one,
        ];
        let n_v2 = [
            mp * (-l * omega * omega * s - two * g * s2),
            two * mp * l * omega * c,
            T::zero(),
            two * mp * l * s,
            T::zero(),
            T::zero(),
        ];
        let acc_v = quotient_derivatives(n_v, n_v1, n_v2, den, den_th, den_thth);

        // pole acceleration: n_w / (l den)
        let n_w = -(f_total * c + mp * l * omega * omega * s * c + (mc + mp) * g * s);
        let n_w1 = [
            f_total * s - mp * l * omega * omega * c2 - (mc + mp) * g * c,
            -mp * l * omega * s2,
            -c,
        ];
        let n_w2 = [
            f_total * c + two * mp * l * omega * omega * s2 + (mc + mp) * g * s,
            -two * mp * l * omega * c2,
            s,
            -mp * l * s2,
            T::zero(),
            T::zero(),
        ];
        let acc_w = quotient_derivatives(n_w, n_w1, n_w2, l * den, l * den_th, l * den_thth);

        (acc_v, acc_w)
    }
}

impl<T: Real> DviSystem<T> for CartPoleSystem<T> {
    fn n_x(&self) -> usize {
        4
    }
    fn n_tau(&self) -> usize {
        1
    }
    fn n_p(&self) -> usize {
        1
    }
    fn n_ineq(&self) -> usize {
        self.boxes.rows()
    }

    fn vector_field(&self, x: &[T], tau: &[T], p: &[T]) -> DVector<T> {
        let (acc_v, acc_w) = self.accelerations(x[1], x[3], tau[0] + p[0]);
        DVector::from_vec(vec![x[2], x[3], acc_v.value, acc_w.value])
    }

    fn vector_field_jacobian(&self, x: &[T], tau: &[T], p: &[T]) -> DMatrix<T> {
        let (acc_v, acc_w) = self.accelerations(x[1], x[3], tau[0] + p[0]);
        let mut j = DMatrix::zeros(4, 6);
        j[(0, 2)] = T::one();
        j[(1, 3)] = T::one();
        for (row, q) in [(2, acc_v), (3, acc_w)] {
            j[(row, 1)] = q.d1[0];
            j[(row, 3)] = q.d1[1];
            j[(row, 4)] = q.d1[2];
            j[(row, 5)] = q.d1[2];
        }
        j
    }

    fn vector_field_hessian(&self, x: &[T], tau: &[T], p: &[T], weights: &[T]) -> DMatrix<T> {
        let (acc_v, acc_w) = self.accelerations(x[1], x[3], tau[0] + p[0]);
        let mut h = DMatrix::zeros(6, 6);
        for (w, q) in [(weights[2], acc_v), (weights[3], acc_w)] {
            let [tt, to, tf, oo, of, ff] = q.d2;
            // map (theta, omega, F) to columns (1, 3, {4, 5})
            h[(1, 1)] += w * tt;
            h[(1, 3)] += w * to;
            h[(3, 1)] += w * to;
            h[(3, 3)] += w * oo;
            for fc in [4, 5] {
                h[(1, fc)] += w * tf;
                h[(fc, 1)] += w * tf;
                h[(3, fc)] += w * of;
                h[(fc, 3)] += w * of;
                for fc2 in [4, 5] {
                    h[(fc, fc2)] += w * ff;
                }
            }
        }
        h
    }

    fn vi_function(&self, x: &[T], _tau: &[T], _p: &[T]) -> DVector<T> {
        // sliding velocity of the cart
        DVector::from_vec(vec![x[2]])
    }

    fn vi_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        let mut j = DMatrix::zeros(1, 6);
        j[(0, 2)] = T::one();
        j
    }

    fn inequality(&self, x: &[T], tau: &[T], _p: &[T]) -> DVector<T> {
        self.boxes.values(x, tau)
    }

    fn inequality_jacobian(&self, _x: &[T], _tau: &[T], _p: &[T]) -> DMatrix<T> {
        self.boxes.jacobian(4, 1, 1)
    }
}

/// Default cost of the cart-pole swing-up.
pub fn cartpole_cost<T: Real>() -> QuadraticCostSpec<T> {
    let pi = T::pi();
    QuadraticCostSpec {
        q_terminal: DVector::from_vec(vec![real(100.0), real(100.0), real(10.0), real(10.0)]),
        q_state: DVector::from_vec(vec![real(1.0), real(10.0), real(0.1), real(0.1)]),
        q_control: DVector::from_vec(vec![real(0.1)]),
        q_equilibrium: DVector::from_vec(vec![real(0.001)]),
        x_terminal: DVector::from_vec(vec![T::zero(), pi, T::zero(), T::zero()]),
        x_ref: RefTrajectory::Constant(DVector::from_vec(vec![
            T::zero(),
            pi,
            T::zero(),
            T::zero(),
        ])),
    }
}

/// Default box limits of the cart-pole benchmark.
pub fn cartpole_boxes<T: Real>() -> BoxLimits<T> {
    BoxLimits {
        state_lo: DVector::from_vec(vec![real(-5.0), real(-10.0), real(-20.0), real(-20.0)]),
        state_hi: DVector::from_vec(vec![real(5.0), real(10.0), real(20.0), real(20.0)]),
        control_lo: DVector::from_element(1, real(-30.0)),
        control_hi: DVector::from_element(1, real(30.0)),
    }
}

/// Cart pole with Coulomb friction between cart and ground. The friction
/// force is the equilibrium variable, boxed at `mu (m_c + m_p) g` with the
/// cart velocity as the VI function: an interior force means stick, a force
/// at its bound means sliding.
pub fn cartpole_friction<T: Real>(
    n_stages: usize,
    dt: T,
    cost: QuadraticCostSpec<T>,
    params: CartPoleParams<T>,
) -> Result<DiscretizedOcpec<T>> {
    let bound = params.friction_bound();
    let bounds = BoundData::new(vec![Some(-bound)], vec![Some(bound)])?;
    let x0 = DVector::zeros(4);
    make_discretized(
        Arc::new(CartPoleSystem {
            params,
            boxes: cartpole_boxes(),
        }),
        Arc::new(cost),
        bounds,
        n_stages,
        dt,
        x0,
    )
}

/// Cart pole with the documented defaults (`N = 400`, `dt = 0.01`).
pub fn cartpole_friction_default<T: Real>() -> Result<DiscretizedOcpec<T>> {
    cartpole_friction(400, real(0.01), cartpole_cost(), CartPoleParams::default())
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Constraint-satisfaction measures of a primal solution.
#[derive(Debug, Clone, Copy)]
pub struct SolutionMetrics<T: Real> {
    /// Maximum equality residual over equality rows and dynamics defects.
    pub r_eq: T,
    /// Magnitude of the worst inequality violation.
    pub r_ineq: T,
    /// Maximum complementarity violation.
    pub r_comp: T,
    /// Total cost.
    pub cost: T,
}

/// Which upper-side scaling the complementarity measure uses.
///
/// The symmetric form mirrors the lower side with `u - p`; the as-printed
/// form reproduces a published variant whose upper scale reuses `l - p` and
/// therefore never activates for `p > l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperScaleForm {
    Symmetric,
    AsPrinted,
}

/// Computes the solution metrics of an iterate's primal part.
pub fn evaluate_solution_metrics_with<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    form: UpperScaleForm,
) -> Result<SolutionMetrics<T>> {
    let d = problem.dims();
    let bounds = problem.bounds();
    let mut r_eq = T::zero();
    let mut r_ineq = T::zero();
    let mut r_comp = T::zero();
    let mut cost = T::zero();
    for n in 0..d.n_stages {
        let z = y.z(n);
        cost += problem.cost(n, z);
        let c = problem.equality(n, z);
        for &e in c.iter() {
            r_eq = r_eq.max(e.abs());
        }
        let mut defect = problem.dynamics(n, z);
        let x_prev: &[T] = if n == 0 {
            problem.initial_state().as_slice()
        } else {
            y.x(n - 1)
        };
        for i in 0..d.n_x {
            defect[i] += x_prev[i];
            r_eq = r_eq.max(defect[i].abs());
        }

        let g = problem.inequality(n, z);
        let mut worst = T::zero();
        for &e in g.iter() {
            worst = worst.min(e);
        }
        let p = y.p(n);
        for i in 0..d.n_p {
            if let Some(l) = bounds.lower(i) {
                worst = worst.min(p[i] - l);
            }
            if let Some(u) = bounds.upper(i) {
                worst = worst.min(u - p[i]);
            }
        }
        r_ineq = r_ineq.max(worst.abs());

        let k = problem.vi_value(n, z);
        for i in 0..d.n_p {
            let (l_vio, l_sc) = match bounds.lower(i) {
                Some(l) => (
                    (l - p[i]).max(T::zero()),
                    T::one().min((p[i] - l).max(T::zero())),
                ),
                None => (T::zero(), T::one()),
            };
            let r_l = l_vio.max(l_sc * k[i].max(T::zero()));
            let (u_vio, u_sc) = match form {
                UpperScaleForm::Symmetric => match bounds.upper(i) {
                    Some(u) => (
                        (p[i] - u).max(T::zero()),
                        T::one().min((u - p[i]).max(T::zero())),
                    ),
                    None => (T::zero(), T::one()),
                },
                UpperScaleForm::AsPrinted => {
                    let u_vio = match bounds.upper(i) {
                        Some(u) => (p[i] - u).max(T::zero()),
                        None => T::zero(),
                    };
                    let u_sc = match bounds.lower(i) {
                        Some(l) => T::one().min((l - p[i]).max(T::zero())),
                        None => T::zero(),
                    };
                    (u_vio, u_sc)
                }
            };
            let r_u = u_vio.max(u_sc * (-k[i]).max(T::zero()));
            r_comp = r_comp.max(r_l.max(r_u));
        }
    }
    Ok(SolutionMetrics {
        r_eq,
        r_ineq,
        r_comp,
        cost,
    })
}

/// Solution metrics with the symmetric upper-side scaling.
pub fn evaluate_solution_metrics<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
) -> Result<SolutionMetrics<T>> {
    evaluate_solution_metrics_with(problem, y, UpperScaleForm::Symmetric)
}

// ---------------------------------------------------------------------------
// Mode sequences
// ---------------------------------------------------------------------------

/// Classification of one equilibrium component at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AtLower,
    Interior,
    AtUpper,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::AtLower => "at-lower",
            Mode::Interior => "interior",
            Mode::AtUpper => "at-upper",
        }
    }
}

/// Maximal run of knots sharing one mode; times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInterval<T: Real> {
    pub mode: Mode,
    pub start: T,
    pub end: T,
}

/// Default classification tolerance: relative to the box width for finite
/// boxes, absolute otherwise.
pub fn default_mode_tolerance<T: Real>(bounds: &BoundData<T>, component: usize) -> T {
    let scale = real::<T>(1e-3);
    match (bounds.lower(component), bounds.upper(component)) {
        (Some(l), Some(u)) => scale * (u - l),
        _ => scale,
    }
}

/// Splits the equilibrium trajectory of one component into mode intervals.
///
/// Knot `n` (one-based) carries time `n dt`; a run of knots `a..=b` maps to
/// the interval `[(a-1) dt, b dt]`, so the intervals partition `[0, N dt]`.
pub fn extract_mode_sequence<T: Real>(
    p_trajectory: &[T],
    bounds: &BoundData<T>,
    component: usize,
    dt: T,
    tol_mode: T,
) -> Vec<ModeInterval<T>> {
    let classify = |p: T| -> Mode {
        if let Some(l) = bounds.lower(component) {
            if p <= l + tol_mode {
                return Mode::AtLower;
            }
        }
        if let Some(u) = bounds.upper(component) {
            if p >= u - tol_mode {
                return Mode::AtUpper;
            }
        }
        Mode::Interior
    };
    let mut intervals: Vec<ModeInterval<T>> = Vec::new();
    for (idx, &p) in p_trajectory.iter().enumerate() {
        let mode = classify(p);
        let t_end = dt * real::<T>((idx + 1) as f64);
        match intervals.last_mut() {
            Some(last) if last.mode == mode => last.end = t_end,
            _ => intervals.push(ModeInterval {
                mode,
                start: dt * real::<T>(idx as f64),
                end: t_end,
            }),
        }
    }
    intervals
}

/// Mode sequence of a solve result for one component, at the default
/// tolerance.
pub fn mode_sequence_of<T: Real>(
    problem: &DiscretizedOcpec<T>,
    y: &Iterate<T>,
    component: usize,
) -> Vec<ModeInterval<T>> {
    let d = problem.dims();
    let p_traj: Vec<T> = (0..d.n_stages).map(|n| y.p(n)[component]).collect();
    let tol = default_mode_tolerance(problem.bounds(), component);
    extract_mode_sequence(&p_traj, problem.bounds(), component, d.dt, tol)
}

// ---------------------------------------------------------------------------
// Random starts
// ---------------------------------------------------------------------------

/// Seed-deterministic random start: primals uniform in `[-range, range]`,
/// inequality duals uniform in `(0, 1]`, equality duals zero.
pub fn random_initial_guess<T: Real>(
    problem: &DiscretizedOcpec<T>,
    seed: u64,
    range: f64,
) -> Iterate<T> {
    let d = problem.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Iterate::zeros(d);
    for n in 0..d.n_stages {
        for i in 0..d.n_sigma {
            y.stage_mut(n)[d.o_sigma() + i] = real(1.0 - rng.random::<f64>());
        }
        for i in 0..d.n_gamma {
            y.stage_mut(n)[d.o_gamma() + i] = real(1.0 - rng.random::<f64>());
        }
        for i in 0..d.n_z() {
            y.stage_mut(n)[d.o_z() + i] = real((2.0 * rng.random::<f64>() - 1.0) * range);
        }
    }
    y
}
