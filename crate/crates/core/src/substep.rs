//! Solvers for the K-, L- and S-substep matrix ODEs.
//!
//! Every substep is a Galerkin restriction `X' = P^* F(t, P X Q^*) Q` of the
//! full problem (for the L-step, of its adjoint `Z -> F(Z^*)^*`). Linear
//! problems are restricted once per substep, so evaluations stay at the size
//! of the factors.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::problem::{LinearStructure, MatrixOdeProblem};
use crate::rk::{dopri5, rk4, RkOutput};
use crate::scalar::{Dense, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubstepSolver {
    /// Closed-form solution of `X' = aAX + bXB + C` through the
    /// eigendecompositions of Hermitian `A` and `B`.
    ExactAffine,
    Rk4 { steps: usize },
    Rk45 { rel_tol: f64, abs_tol: f64 },
}

impl SubstepSolver {
    pub const DEFAULT_RK45: SubstepSolver = SubstepSolver::Rk45 {
        rel_tol: 1e-10,
        abs_tol: 1e-10,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            SubstepSolver::Rk4 { steps: 0 } => Err(Error::invalid("rk4 needs steps >= 1")),
            SubstepSolver::Rk45 { rel_tol, abs_tol } if !(rel_tol > 0.0 && abs_tol > 0.0) => {
                Err(Error::invalid("rk45 tolerances must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SubstepSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubstepSolver::ExactAffine => write!(f, "exact-affine"),
            SubstepSolver::Rk4 { steps } => write!(f, "rk4:{steps}"),
            SubstepSolver::Rk45 { rel_tol, abs_tol } => write!(f, "rk45:{rel_tol:e}:{abs_tol:e}"),
        }
    }
}

impl FromStr for SubstepSolver {
    type Err = Error;

    /// `exact-affine`, `rk4[:steps]` or `rk45[:rel_tol[:abs_tol]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let kind = parts.next().unwrap_or_default();
        let nums: Vec<&str> = parts.collect();
        let bad = || Error::invalid(format!("cannot parse substep solver {s:?}"));
        let solver = match (kind, nums.as_slice()) {
            ("exact-affine", []) => SubstepSolver::ExactAffine,
            ("rk4", []) => SubstepSolver::Rk4 { steps: 1 },
            ("rk4", [n]) => SubstepSolver::Rk4 { steps: n.parse().map_err(|_| bad())? },
            ("rk45", []) => SubstepSolver::DEFAULT_RK45,
            ("rk45", [tol]) => {
                let tol = tol.parse().map_err(|_| bad())?;
                SubstepSolver::Rk45 { rel_tol: tol, abs_tol: tol }
            }
            ("rk45", [r, a]) => SubstepSolver::Rk45 {
                rel_tol: r.parse().map_err(|_| bad())?,
                abs_tol: a.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        solver.validate()?;
        Ok(solver)
    }
}

/// Substep result with the number of reduced right-hand-side evaluations.
#[derive(Debug, Clone)]
pub struct SubstepSolution<T: Scalar> {
    pub value: Dense<T>,
    pub rhs_evals: usize,
}

impl<T: Scalar> From<RkOutput<T>> for SubstepSolution<T> {
    fn from(out: RkOutput<T>) -> Self {
        Self {
            value: out.value,
            rhs_evals: out.rhs_evals,
        }
    }
}

/// Restricted right-hand side `X -> sign * P^* G(t, P X Q^*) Q`, with
/// `G = F` or, for `adjoint`, `G(Z) = F(Z^*)^*`.
enum Reduced<'a, T: Scalar> {
    Linear(LinearStructure<T>),
    General {
        problem: &'a MatrixOdeProblem<T>,
        left: Option<&'a Dense<T>>,
        right: Option<&'a Dense<T>>,
        adjoint: bool,
        sign: f64,
    },
}

impl<'a, T: Scalar> Reduced<'a, T> {
    fn new(
        problem: &'a MatrixOdeProblem<T>,
        left: Option<&'a Dense<T>>,
        right: Option<&'a Dense<T>>,
        adjoint: bool,
        sign: f64,
    ) -> Self {
        let base = if adjoint {
            problem.linear_adjoint()
        } else {
            problem.linear()
        };
        match base {
            Some(ls) => {
                let reduced = ls.restrict(left, right);
                Reduced::Linear(if sign == 1.0 { reduced } else { reduced.scaled(sign) })
            }
            None => Reduced::General {
                problem,
                left,
                right,
                adjoint,
                sign,
            },
        }
    }

    fn eval(&self, t: f64, x: &Dense<T>) -> Dense<T> {
        match self {
            Reduced::Linear(ls) => ls.apply(x),
            Reduced::General {
                problem,
                left,
                right,
                adjoint,
                sign,
            } => {
                let mut z = match left {
                    Some(p) => *p * x,
                    None => x.clone(),
                };
                if let Some(q) = right {
                    z *= q.adjoint();
                }
                let g = if *adjoint {
                    problem.rhs(t, &z.adjoint()).adjoint()
                } else {
                    problem.rhs(t, &z)
                };
                let mut out = match left {
                    Some(p) => p.adjoint() * g,
                    None => g,
                };
                if let Some(q) = right {
                    out *= *q;
                }
                if *sign != 1.0 {
                    out = out.scale(*sign);
                }
                out
            }
        }
    }

    fn solve(&self, x0: &Dense<T>, t0: f64, t1: f64, solver: &SubstepSolver) -> Result<SubstepSolution<T>> {
        if !(t1 >= t0) {
            return Err(Error::invalid(format!("substep interval [{t0}, {t1}] is reversed")));
        }
        solver.validate()?;
        match *solver {
            SubstepSolver::ExactAffine => match self {
                Reduced::Linear(ls) => exact_affine(ls, x0, t1 - t0),
                Reduced::General { .. } => Err(Error::NotAffine(
                    "the problem has no linear structure".into(),
                )),
            },
            SubstepSolver::Rk4 { steps } => {
                rk4(|t, x| self.eval(t, x), x0, t0, t1, steps).map(Into::into)
            }
            SubstepSolver::Rk45 { rel_tol, abs_tol } => {
                dopri5(|t, x| self.eval(t, x), x0, t0, t1, rel_tol, abs_tol).map(Into::into)
            }
        }
    }
}

/// `(e^z - 1) / z`, accurate near zero.
fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..=20 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

fn to_complex<T: Scalar>(x: T) -> Complex64 {
    Complex64::new(x.re(), x.im())
}

fn from_complex<T: Scalar>(z: Complex64) -> T {
    T::from_parts(z.re, z.im)
}

/// Exact flow of `X' = aAX + bXB + cX + C` over a time span `tau`.
///
/// In the eigenbases of `A` and `B` every entry decouples:
/// `x_ij(tau) = e^{tau s_ij} x_ij(0) + tau phi1(tau s_ij) c_ij` with
/// `s_ij = a lambda_i + b mu_j + c`.
fn exact_affine<T: Scalar>(ls: &LinearStructure<T>, x0: &Dense<T>, tau: f64) -> Result<SubstepSolution<T>> {
    let form = ls.affine_form()?;
    let left = form.left.map(|(a, op)| op.eig().map(|e| (a, e))).transpose()?;
    let right = form.right.map(|(b, op)| op.eig().map(|e| (b, e))).transpose()?;

    let to_eigen = |x: &Dense<T>| {
        let lx = match &left {
            Some((_, e)) => e.vectors.adjoint() * x,
            None => x.clone(),
        };
        match &right {
            Some((_, e)) => lx * &e.vectors,
            None => lx,
        }
    };
    let mut coeffs = to_eigen(x0);
    let forcing = form.source.map(to_eigen);
    let shift = to_complex(form.shift);
    for j in 0..coeffs.ncols() {
        let mu = right
            .as_ref()
            .map_or(Complex64::new(0.0, 0.0), |(b, e)| to_complex(*b) * e.values[j]);
        for i in 0..coeffs.nrows() {
            let lambda = left
                .as_ref()
                .map_or(Complex64::new(0.0, 0.0), |(a, e)| to_complex(*a) * e.values[i]);
            let z = (lambda + mu + shift) * tau;
            let mut value = z.exp() * to_complex(coeffs[(i, j)]);
            if let Some(c) = &forcing {
                value += phi1(z) * tau * to_complex(c[(i, j)]);
            }
            coeffs[(i, j)] = from_complex(value);
        }
    }
    let lx = match &left {
        Some((_, e)) => &e.vectors * coeffs,
        None => coeffs,
    };
    let value = match &right {
        Some((_, e)) => lx * e.vectors.adjoint(),
        None => lx,
    };
    if value.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("exact-affine substep"));
    }
    Ok(SubstepSolution {
        value,
        rhs_evals: 0,
    })
}

/// K-step: `K' = F(t, K V0^*) V0` from `K(t0) = K0`.
pub fn solve_k<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    v0: &Dense<T>,
    k0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>> {
    check_shape(k0, problem.dims().0, v0.ncols(), "K0")?;
    Reduced::new(problem, None, Some(v0), false, 1.0).solve(k0, t0, t1, solver)
}

/// L-step: `L' = F(t, U0 L^*)^* U0` from `L(t0) = L0`.
pub fn solve_l<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    u0: &Dense<T>,
    l0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>> {
    check_shape(l0, problem.dims().1, u0.ncols(), "L0")?;
    Reduced::new(problem, None, Some(u0), true, 1.0).solve(l0, t0, t1, solver)
}

/// Galerkin S-step: `S' = U^* F(t, U S V^*) V` from `S(t0) = S0`.
pub fn solve_s<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    u_basis: &Dense<T>,
    v_basis: &Dense<T>,
    s0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>> {
    check_shape(s0, u_basis.ncols(), v_basis.ncols(), "S0")?;
    Reduced::new(problem, Some(u_basis), Some(v_basis), false, 1.0).solve(s0, t0, t1, solver)
}

/// Backward S-step of projector splitting: `S' = -U^* F(t, U S V^*) V`.
pub(crate) fn solve_s_backward<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    u_basis: &Dense<T>,
    v_basis: &Dense<T>,
    s0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>> {
    check_shape(s0, u_basis.ncols(), v_basis.ncols(), "S0")?;
    Reduced::new(problem, Some(u_basis), Some(v_basis), false, -1.0).solve(s0, t0, t1, solver)
}

/// Generic explicit RK integration of `y' = f(t, y)`.
pub fn rk_step_generic<T, F>(
    f: F,
    y0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>>
where
    T: Scalar,
    F: FnMut(f64, &Dense<T>) -> Dense<T>,
{
    match *solver {
        SubstepSolver::ExactAffine => Err(Error::invalid(
            "exact-affine needs a linear problem, not a closure",
        )),
        SubstepSolver::Rk4 { steps } => rk4(f, y0, t0, t1, steps).map(Into::into),
        SubstepSolver::Rk45 { rel_tol, abs_tol } => {
            dopri5(f, y0, t0, t1, rel_tol, abs_tol).map(Into::into)
        }
    }
}

/// Integrate the full dense problem, e.g. to build a reference solution.
pub fn solve_dense<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<SubstepSolution<T>> {
    check_shape(y0, problem.dims().0, problem.dims().1, "Y0")?;
    Reduced::new(problem, None, None, false, 1.0).solve(y0, t0, t1, solver)
}

fn check_shape<T: Scalar>(x: &Dense<T>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if x.nrows() != rows || x.ncols() != cols {
        return Err(Error::invalid(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}
