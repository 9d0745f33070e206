//! Dynamical low-rank time integration of matrix differential equations
//! `A'(t) = F(t, A(t))`.
//!
//! States are kept as `U S V^*` with orthonormal `U`, `V`. The basis-update
//! & Galerkin (BUG) integrators, including the second-order midpoint and
//! trapezoidal variants, live in [`integrators`]; the substep matrix ODEs
//! are solved by [`substep`].

pub mod error;
pub mod integrators;
pub mod linalg;
pub mod lowrank;
pub mod problem;
pub mod problems;
pub mod reference;
pub mod rk;
pub mod scalar;
pub mod substep;

pub use error::{Error, Result};
pub use integrators::{
    evolve, evolve_with, step, EvolveFailure, EvolveSummary, IntegratorKind, StepResult,
    StepSettings, Trajectory,
};
pub use lowrank::{LowRankState, NormalComponentDiagnostic, TruncationPolicy};
pub use problem::{Conserved, LinearStructure, LinearTerm, MatrixOdeProblem, Operator, Rhs};
pub use scalar::{Dense, Scalar};
pub use substep::SubstepSolver;

pub use num_complex::Complex64;
