//! Solver library for optimal control problems with equilibrium constraints
//! (OCPEC).
//!
//! An OCPEC couples an ordinary differential equation with a box-constrained
//! variational inequality on an algebraic variable. Direct transcription with
//! the implicit Euler method turns it into a stage-structured NLP whose
//! complementarity constraints violate the standard constraint
//! qualifications. This crate solves the discretized problem with a
//! non-interior-point continuation method:
//!
//! - the equilibrium constraints are relaxed by a perturbation parameter `s`
//!   (Scholtes regularization),
//! - the KKT conditions are mapped to a square system of equations through a
//!   smoothed Fischer-Burmeister function with parameter `z`,
//! - Newton steps on that system are computed by a Riccati-like recursion
//!   over the block-tridiagonal KKT matrix,
//! - an l1 exact-penalty merit line search with a second-order correction
//!   globalizes the iteration, with a feasibility restoration phase as the
//!   fallback remedy,
//! - an outer loop drives `(s, z)` toward their target values.
//!
//! Core numerics are generic over the scalar type (see [`Real`]); the
//! `f64` aliases below are what most users want.

pub mod benchmarks;
pub mod driver;
pub mod globalization;
pub mod kkt;
pub mod num;
pub mod problem;
pub mod restoration;
pub mod riccati;

pub use num::Real;

pub use driver::{solve, SolveReport, SolveStatus, SolverOptions};
pub use kkt::iterate::{Iterate, Perturbation};
pub use problem::{BoundData, Dimensions, DiscretizedOcpec};

/// Discretized problem with `f64` scalars.
pub type Problem = problem::DiscretizedOcpec<f64>;
/// Solver options with `f64` scalars.
pub type Options = driver::SolverOptions<f64>;
/// Solve report with `f64` scalars.
pub type Report = driver::SolveReport<f64>;
/// Primal-dual iterate with `f64` scalars.
pub type IterateF64 = kkt::iterate::Iterate<f64>;

/// Errors produced while building problems or running the solver machinery.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid bound data: component {index} has l >= u")]
    InvalidBounds { index: usize },
    #[error("negative relaxation parameter s = {value}")]
    NegativeRelaxation { value: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("evaluator returned a non-finite value at stage {stage} in {what}")]
    EvaluatorFailure { stage: usize, what: &'static str },
    #[error("singular Fischer-Burmeister scaling at stage {stage} (z = 0 and reg_fb = 0)")]
    SingularFbScaling { stage: usize },
    #[error("numerically singular reduced block at stage {stage} (condition estimate {cond:.3e})")]
    SingularStageBlock { stage: usize, cond: f64 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
