//! Shared test fixtures: a tiny scalar-dimension problem with nonlinear
//! pieces, and dense reference solves.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ocpec::kkt::Iterate;
use ocpec::problem::{BoundData, Dimensions, DiscretizedOcpec, StageEvaluator};

/// Minimal nonlinear stage evaluator with all dimensions one:
/// cost `0.5 q (x - x_ref)^2 + 0.5 r tau^2 + 0.5 qp p^2`,
/// inequality `G = x + g0 - 0.1 x^2`, equality `C = w - (k0 x + k1 tau + k2 p)`,
/// dynamics `f = a x + b tau + e p + c x^2`.
pub struct ScalarStage {
    pub dt: f64,
    pub q: f64,
    pub r: f64,
    pub qp: f64,
    pub x_ref: f64,
    pub g0: f64,
    pub gq: f64,
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub c: f64,
    pub k: [f64; 3],
}

impl Default for ScalarStage {
    fn default() -> Self {
        Self {
            dt: 0.1,
            q: 2.0,
            r: 1.0,
            qp: 0.5,
            x_ref: 0.3,
            g0: 1.5,
            gq: 0.1,
            a: 0.8,
            b: 1.2,
            e: -0.7,
            c: 0.25,
            k: [1.0, -0.5, 2.0],
        }
    }
}

impl StageEvaluator<f64> for ScalarStage {
    fn cost(&self, _n: usize, z: &[f64]) -> f64 {
        let (x, tau, p) = (z[0], z[1], z[2]);
        0.5 * self.q * (x - self.x_ref).powi(2) + 0.5 * self.r * tau * tau + 0.5 * self.qp * p * p
    }

    fn cost_gradient(&self, _n: usize, z: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![
            self.q * (z[0] - self.x_ref),
            self.r * z[1],
            self.qp * z[2],
            0.0,
        ])
    }

    fn cost_hessian(&self, _n: usize, _z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.q, self.r, self.qp, 0.0]))
    }

    fn inequality(&self, _n: usize, z: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![z[0] + self.g0 - self.gq * z[0] * z[0]])
    }

    fn inequality_jacobian(&self, _n: usize, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 4, &[1.0 - 2.0 * self.gq * z[0], 0.0, 0.0, 0.0])
    }

    fn equality(&self, _n: usize, z: &[f64]) -> DVector<f64> {
        let k = self.k[0] * z[0] + self.k[1] * z[1] + self.k[2] * z[2];
        DVector::from_vec(vec![z[3] - k])
    }

    fn equality_jacobian(&self, _n: usize, _z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 4, &[-self.k[0], -self.k[1], -self.k[2], 1.0])
    }

    fn dynamics(&self, _n: usize, z: &[f64]) -> DVector<f64> {
        let f = self.a * z[0] + self.b * z[1] + self.e * z[2] + self.c * z[0] * z[0];
        DVector::from_vec(vec![f * self.dt - z[0]])
    }

    fn dynamics_jacobian(&self, _n: usize, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            1,
            4,
            &[
                (self.a + 2.0 * self.c * z[0]) * self.dt - 1.0,
                self.b * self.dt,
                self.e * self.dt,
                0.0,
            ],
        )
    }

    fn vi_value(&self, _n: usize, z: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![self.k[0] * z[0] + self.k[1] * z[1] + self.k[2] * z[2]])
    }

    fn constraints_hessian(
        &self,
        _n: usize,
        _z: &[f64],
        sigma: &[f64],
        _eta: &[f64],
        lambda: &[f64],
    ) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(4, 4);
        // -sigma d2G + lambda d2(f dt - x)
        h[(0, 0)] = -sigma[0] * (-2.0 * self.gq) + lambda[0] * 2.0 * self.c * self.dt;
        h
    }
}

/// Tiny problem: all dimensions one, `N` stages, box `[-1, 1]` on `p`.
pub fn scalar_problem(n_stages: usize) -> DiscretizedOcpec<f64> {
    let dims = Dimensions::new(1, 1, 1, 1, 1, 4, n_stages, 0.1).unwrap();
    let bounds = BoundData::new(vec![Some(-1.0)], vec![Some(1.0)]).unwrap();
    DiscretizedOcpec::new(
        dims,
        bounds,
        DVector::from_vec(vec![0.4]),
        Arc::new(ScalarStage::default()),
    )
    .unwrap()
}

/// A deterministic, vaguely interesting iterate for the scalar problem.
pub fn scalar_iterate(problem: &DiscretizedOcpec<f64>) -> Iterate<f64> {
    let d = problem.dims();
    let mut y = Iterate::zeros(d);
    for n in 0..d.n_stages {
        let fs = n as f64;
        let vals = [
            0.6 + 0.1 * fs,  // sigma
            -0.3 + 0.2 * fs, // eta
            0.5 - 0.1 * fs,  // lambda
            0.8,             // gamma (4 entries below)
            0.4 + 0.05 * fs,
            0.7,
            0.2 + 0.1 * fs,
            0.3 - 0.2 * fs,  // x
            -0.6 + 0.1 * fs, // tau
            0.2,             // p
            0.9 - 0.3 * fs,  // w
        ];
        for (i, v) in vals.into_iter().enumerate() {
            y.stage_mut(n)[i] = v;
        }
    }
    y
}
