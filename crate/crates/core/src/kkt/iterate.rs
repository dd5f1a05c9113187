//! Stage-wise primal-dual iterate storage.

use nalgebra::DVector;

use crate::num::Real;
use crate::problem::Dimensions;
use crate::{Error, Result};

/// Perturbation parameters of the relaxed KKT system: the equilibrium
/// relaxation `s` and the complementarity smoothing `z`. Both are
/// nonincreasing over a solve and bounded below by their target values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation<T: Real> {
    pub s: T,
    pub z: T,
}

impl<T: Real> Perturbation<T> {
    pub fn new(s: T, z: T) -> Self {
        Self { s, z }
    }
}

/// Full primal-dual iterate stored stage-wise.
///
/// Each stage vector is laid out `(sigma, eta, lambda, gamma, x, tau, p, w)`,
/// matching the row ordering of the stage KKT residual. The conventions
/// `lambda_{N+1} = 0` and fixed `x_0` live outside the iterate. No sign
/// restriction is enforced on any component: non-interior points are legal.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T: Real> {
    dims: Dimensions<T>,
    stages: Vec<DVector<T>>,
}

impl<T: Real> Iterate<T> {
    pub fn zeros(dims: &Dimensions<T>) -> Self {
        Self {
            dims: dims.clone(),
            stages: (0..dims.n_stages).map(|_| DVector::zeros(dims.n_y())).collect(),
        }
    }

    pub fn from_stages(dims: &Dimensions<T>, stages: Vec<DVector<T>>) -> Result<Self> {
        if stages.len() != dims.n_stages {
            return Err(Error::DimensionMismatch {
                context: "iterate stage count",
                expected: dims.n_stages,
                actual: stages.len(),
            });
        }
        for v in &stages {
            if v.len() != dims.n_y() {
                return Err(Error::DimensionMismatch {
                    context: "iterate stage vector",
                    expected: dims.n_y(),
                    actual: v.len(),
                });
            }
        }
        Ok(Self {
            dims: dims.clone(),
            stages,
        })
    }

    pub fn dims(&self) -> &Dimensions<T> {
        &self.dims
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, n: usize) -> &DVector<T> {
        &self.stages[n]
    }

    pub fn stage_mut(&mut self, n: usize) -> &mut DVector<T> {
        &mut self.stages[n]
    }

    pub fn sigma(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_sigma()..d.o_sigma() + d.n_sigma]
    }

    pub fn eta(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_eta()..d.o_eta() + d.n_eta]
    }

    pub fn lambda(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_lambda()..d.o_lambda() + d.n_x]
    }

    pub fn gamma(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_gamma()..d.o_gamma() + d.n_gamma]
    }

    /// Full primal block `(x, tau, p, w)` of a stage.
    pub fn z(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_z()..d.o_z() + d.n_z()]
    }

    pub fn x(&self, n: usize) -> &[T] {
        let d = &self.dims;
        &self.stages[n].as_slice()[d.o_z()..d.o_z() + d.n_x]
    }

    pub fn tau(&self, n: usize) -> &[T] {
        let d = &self.dims;
        let at = d.o_z() + d.z_tau();
        &self.stages[n].as_slice()[at..at + d.n_tau]
    }

    pub fn p(&self, n: usize) -> &[T] {
        let d = &self.dims;
        let at = d.o_z() + d.z_p();
        &self.stages[n].as_slice()[at..at + d.n_p]
    }

    pub fn w(&self, n: usize) -> &[T] {
        let d = &self.dims;
        let at = d.o_z() + d.z_w();
        &self.stages[n].as_slice()[at..at + d.n_w]
    }

    pub fn set_block(&mut self, n: usize, offset: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self.stages[n][offset + i] = v;
        }
    }

    /// `self + alpha * direction`, stage by stage.
    pub fn plus_scaled(&self, alpha: T, direction: &[DVector<T>]) -> Self {
        let stages = self
            .stages
            .iter()
            .zip(direction.iter())
            .map(|(y, d)| y + d * alpha)
            .collect();
        Self {
            dims: self.dims.clone(),
            stages,
        }
    }

    /// Sum of absolute values over the dual blocks of all stages.
    pub fn dual_l1_norm(&self) -> T {
        let d = &self.dims;
        let mut acc = T::zero();
        for n in 0..self.n_stages() {
            for &v in &self.stages[n].as_slice()[0..d.o_z()] {
                acc += v.abs();
            }
        }
        acc
    }

    /// Number of dual variables across all stages.
    pub fn dual_count(&self) -> usize {
        self.dims.o_z() * self.n_stages()
    }

    pub fn stages(&self) -> &[DVector<T>] {
        &self.stages
    }
}

/// Infinity norm over a stage-wise vector collection.
pub fn stagewise_norm_inf<T: Real>(stages: &[DVector<T>]) -> T {
    let mut m = T::zero();
    for v in stages {
        for &e in v.as_slice() {
            m = m.max(e.abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dimensions<f64> {
        Dimensions::new(2, 1, 1, 3, 2, 4, 2, 0.1).unwrap()
    }

    #[test]
    fn accessors_slice_the_right_blocks() {
        let d = dims();
        let mut y = Iterate::zeros(&d);
        let n_y = d.n_y();
        for n in 0..2 {
            for i in 0..n_y {
                y.stage_mut(n)[i] = (n * 100 + i) as f64;
            }
        }
        assert_eq!(y.sigma(0), &[0.0, 1.0, 2.0]);
        assert_eq!(y.eta(0), &[3.0, 4.0]);
        assert_eq!(y.lambda(0), &[5.0, 6.0]);
        assert_eq!(y.gamma(0), &[7.0, 8.0, 9.0, 10.0]);
        assert_eq!(y.x(0), &[11.0, 12.0]);
        assert_eq!(y.tau(0), &[13.0]);
        assert_eq!(y.p(0), &[14.0]);
        assert_eq!(y.w(0), &[15.0]);
        assert_eq!(y.z(1), &[111.0, 112.0, 113.0, 114.0, 115.0]);
    }

    #[test]
    fn plus_scaled_applies_per_stage() {
        let d = dims();
        let mut y = Iterate::zeros(&d);
        y.stage_mut(0)[0] = 1.0;
        let dir: Vec<_> = (0..2).map(|_| DVector::from_element(d.n_y(), 2.0)).collect();
        let y2 = y.plus_scaled(0.5, &dir);
        assert_eq!(y2.stage(0)[0], 2.0);
        assert_eq!(y2.stage(1)[3], 1.0);
    }

    #[test]
    fn dual_norm_ignores_primals() {
        let d = dims();
        let mut y = Iterate::zeros(&d);
        let o_z = d.o_z();
        y.stage_mut(0)[o_z] = 100.0; // primal: excluded
        y.stage_mut(1)[0] = -3.0; // dual: included
        assert_eq!(y.dual_l1_norm(), 3.0);
        assert_eq!(y.dual_count(), 2 * o_z);
    }
}
