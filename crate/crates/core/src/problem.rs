//! Matrix ODEs `A' = F(t, A)` as seen by the low-rank integrators.
//!
//! Right-hand sides are either *linear structures*
//! `F(t, Y) = sum_k c_k L_k Y R_k + C`, which the integrators can restrict
//! to small Galerkin spaces without forming `m x n` intermediates, or general
//! dense closures.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, is_hermitian, HermitianEig};
use crate::lowrank::LowRankState;
use crate::scalar::{inner, Dense, Scalar};

const HERMITIAN_TOL: f64 = 1e-13;

/// A square coefficient matrix with a lazily computed eigendecomposition.
pub struct Operator<T: Scalar> {
    matrix: Dense<T>,
    hermitian: bool,
    eig: OnceLock<Result<HermitianEig<T>>>,
}

impl<T: Scalar> Operator<T> {
    pub fn new(matrix: Dense<T>) -> Arc<Self> {
        assert!(matrix.is_square(), "operators are square");
        let hermitian = is_hermitian(&matrix, HERMITIAN_TOL);
        let matrix = if hermitian {
            hermitian_part(&matrix)
        } else {
            matrix
        };
        Arc::new(Self {
            matrix,
            hermitian,
            eig: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &Dense<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Eigendecomposition, computed on first use.
    pub fn eig(&self) -> Result<&HermitianEig<T>> {
        if !self.hermitian {
            return Err(Error::NotAffine("coefficient matrix is not Hermitian".into()));
        }
        self.eig
            .get_or_init(|| HermitianEig::new(&self.matrix))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn adjoint(self: &Arc<Self>) -> Arc<Self> {
        if self.hermitian {
            Arc::clone(self)
        } else {
            Operator::new(self.matrix.adjoint())
        }
    }

    /// `P^* A P` for orthonormal `P`.
    fn compress(&self, basis: &Dense<T>) -> Arc<Self> {
        let reduced = basis.adjoint() * (&self.matrix * basis);
        let reduced = if self.hermitian {
            hermitian_part(&reduced)
        } else {
            reduced
        };
        Arc::new(Self {
            matrix: reduced,
            hermitian: self.hermitian,
            eig: OnceLock::new(),
        })
    }
}

impl<T: Scalar> fmt::Debug for Operator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("dim", &self.dim())
            .field("hermitian", &self.hermitian)
            .finish()
    }
}

/// `coeff * L Y R`, where a missing side is the identity.
#[derive(Debug, Clone)]
pub struct LinearTerm<T: Scalar> {
    pub coeff: T,
    pub left: Option<Arc<Operator<T>>>,
    pub right: Option<Arc<Operator<T>>>,
}

/// `F(Y) = sum_k c_k L_k Y R_k + C` on `rows x cols` matrices.
#[derive(Debug, Clone)]
pub struct LinearStructure<T: Scalar> {
    rows: usize,
    cols: usize,
    terms: Vec<LinearTerm<T>>,
    source: Option<Dense<T>>,
}

/// Eigen-diagonalizable affine form `a A X + b X B + c X + C`.
pub(crate) struct AffineForm<'a, T: Scalar> {
    pub left: Option<(T, &'a Operator<T>)>,
    pub right: Option<(T, &'a Operator<T>)>,
    pub shift: T,
    pub source: Option<&'a Dense<T>>,
}

impl<T: Scalar> LinearStructure<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        terms: Vec<LinearTerm<T>>,
        source: Option<Dense<T>>,
    ) -> Result<Self> {
        for term in &terms {
            if term.left.as_ref().is_some_and(|l| l.dim() != rows)
                || term.right.as_ref().is_some_and(|r| r.dim() != cols)
            {
                return Err(Error::invalid("linear term does not match the state shape"));
            }
        }
        if source
            .as_ref()
            .is_some_and(|c| c.nrows() != rows || c.ncols() != cols)
        {
            return Err(Error::invalid("source term does not match the state shape"));
        }
        Ok(Self {
            rows,
            cols,
            terms,
            source,
        })
    }

    pub fn terms(&self) -> &[LinearTerm<T>] {
        &self.terms
    }

    pub fn source(&self) -> Option<&Dense<T>> {
        self.source.as_ref()
    }

    pub fn apply(&self, y: &Dense<T>) -> Dense<T> {
        let mut out = match &self.source {
            Some(c) => c.clone(),
            None => Dense::zeros(self.rows, self.cols),
        };
        for term in &self.terms {
            let ly = match &term.left {
                Some(l) => l.matrix() * y,
                None => y.clone(),
            };
            let lyr = match &term.right {
                Some(r) => ly * r.matrix(),
                None => ly,
            };
            out += lyr * term.coeff;
        }
        out
    }

    /// `F(U S V^*) W` without forming `U S V^*`.
    pub fn apply_factored(
        &self,
        u: &Dense<T>,
        s: &Dense<T>,
        v: &Dense<T>,
        w: &Dense<T>,
    ) -> Dense<T> {
        let mut out = match &self.source {
            Some(c) => c * w,
            None => Dense::zeros(self.rows, w.ncols()),
        };
        for term in &self.terms {
            let rw = match &term.right {
                Some(r) => r.matrix() * w,
                None => w.clone(),
            };
            let core = u * (s * (v.adjoint() * rw));
            let lcore = match &term.left {
                Some(l) => l.matrix() * core,
                None => core,
            };
            out += lcore * term.coeff;
        }
        out
    }

    /// The structure of `Z -> F(Z^*)^*`.
    pub fn adjoint(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            terms: self
                .terms
                .iter()
                .map(|t| LinearTerm {
                    coeff: t.coeff.conjugate(),
                    left: t.right.as_ref().map(Operator::adjoint),
                    right: t.left.as_ref().map(Operator::adjoint),
                })
                .collect(),
            source: self.source.as_ref().map(|c| c.adjoint()),
        }
    }

    /// Galerkin restriction `X -> P^* F(P X Q^*) Q`; `None` bases are the identity.
    pub fn restrict(&self, left: Option<&Dense<T>>, right: Option<&Dense<T>>) -> Self {
        let rows = left.map_or(self.rows, |p| p.ncols());
        let cols = right.map_or(self.cols, |q| q.ncols());
        let terms = self
            .terms
            .iter()
            .map(|t| LinearTerm {
                coeff: t.coeff,
                left: match (&t.left, left) {
                    (Some(l), Some(p)) => Some(l.compress(p)),
                    (l, _) => l.clone(),
                },
                right: match (&t.right, right) {
                    (Some(r), Some(q)) => Some(r.compress(q)),
                    (r, _) => r.clone(),
                },
            })
            .collect();
        let source = self.source.as_ref().map(|c| {
            let pc = match left {
                Some(p) => p.adjoint() * c,
                None => c.clone(),
            };
            match right {
                Some(q) => pc * q,
                None => pc,
            }
        });
        Self {
            rows,
            cols,
            terms,
            source,
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.coeff = t.coeff.scale(factor);
        }
        if let Some(c) = &mut self.source {
            *c = c.scale(factor);
        }
        self
    }

    /// View as `a A X + b X B + c X + C` with Hermitian `A`, `B`.
    pub(crate) fn affine_form(&self) -> Result<AffineForm<'_, T>> {
        let mut form = AffineForm {
            left: None,
            right: None,
            shift: T::zero(),
            source: self.source.as_ref(),
        };
        for t in &self.terms {
            match (&t.left, &t.right) {
                (None, None) => form.shift += t.coeff,
                (Some(l), None) if form.left.is_none() => form.left = Some((t.coeff, l)),
                (None, Some(r)) if form.right.is_none() => form.right = Some((t.coeff, r)),
                (Some(_), Some(_)) => {
                    return Err(Error::NotAffine("found a two-sided term L Y R".into()))
                }
                _ => return Err(Error::NotAffine("repeated one-sided terms".into())),
            }
        }
        for (_, op) in form.left.iter().chain(form.right.iter()) {
            if !op.is_hermitian() {
                return Err(Error::NotAffine("coefficient matrix is not Hermitian".into()));
            }
        }
        Ok(form)
    }
}

pub type RhsFn<T> = dyn Fn(f64, &Dense<T>) -> Dense<T> + Send + Sync;
pub type SolutionFn<T> = dyn Fn(f64) -> Dense<T> + Send + Sync;

#[derive(Clone)]
pub enum Rhs<T: Scalar> {
    Linear(LinearStructure<T>),
    General(Arc<RhsFn<T>>),
}

/// A functional expected to be conserved by the exact flow.
#[derive(Debug, Clone)]
pub enum Conserved<T: Scalar> {
    /// `||Y||_F`.
    Norm,
    /// `Re <Y, H[Y]>` for a self-adjoint `H`.
    Energy(LinearStructure<T>),
}

impl<T: Scalar> Conserved<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Conserved::Norm => "norm",
            Conserved::Energy(_) => "energy",
        }
    }

    pub fn evaluate(&self, y: &LowRankState<T>) -> f64 {
        match self {
            Conserved::Norm => y.norm(),
            Conserved::Energy(h) => {
                // <U S V^*, H[Y]> = trace(S^* U^* H[Y] V)
                let hv = h.apply_factored(y.u(), y.s(), y.v(), y.v());
                inner(y.s(), &(y.u().adjoint() * hv)).re()
            }
        }
    }

    pub fn evaluate_dense(&self, y: &Dense<T>) -> f64 {
        match self {
            Conserved::Norm => y.norm(),
            Conserved::Energy(h) => inner(y, &h.apply(y)).re(),
        }
    }
}

/// `A'(t) = F(t, A(t))` with an initial low-rank factorization.
#[derive(Clone)]
pub struct MatrixOdeProblem<T: Scalar> {
    name: String,
    rows: usize,
    cols: usize,
    t0: f64,
    rhs: Rhs<T>,
    adjoint: Option<LinearStructure<T>>,
    exact: Option<Arc<SolutionFn<T>>>,
    conserved: Vec<Conserved<T>>,
    initial: LowRankState<T>,
}

impl<T: Scalar> fmt::Debug for MatrixOdeProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixOdeProblem")
            .field("name", &self.name)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("linear", &self.linear().is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl<T: Scalar> MatrixOdeProblem<T> {
    pub fn new(name: impl Into<String>, rhs: Rhs<T>, initial: LowRankState<T>) -> Self {
        let adjoint = match &rhs {
            Rhs::Linear(ls) => Some(ls.adjoint()),
            Rhs::General(_) => None,
        };
        Self {
            name: name.into(),
            rows: initial.rows(),
            cols: initial.cols(),
            t0: 0.0,
            rhs,
            adjoint,
            exact: None,
            conserved: Vec::new(),
            initial,
        }
    }

    pub fn with_exact_solution(mut self, exact: Arc<SolutionFn<T>>) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn with_conserved(mut self, conserved: Vec<Conserved<T>>) -> Self {
        self.conserved = conserved;
        self
    }

    pub fn with_initial_state(mut self, initial: LowRankState<T>) -> Result<Self> {
        if initial.rows() != self.rows || initial.cols() != self.cols {
            return Err(Error::invalid("initial state shape does not match the problem"));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn initial_state(&self) -> &LowRankState<T> {
        &self.initial
    }

    pub fn linear(&self) -> Option<&LinearStructure<T>> {
        match &self.rhs {
            Rhs::Linear(ls) => Some(ls),
            Rhs::General(_) => None,
        }
    }

    pub(crate) fn linear_adjoint(&self) -> Option<&LinearStructure<T>> {
        self.adjoint.as_ref()
    }

    pub fn conserved(&self) -> &[Conserved<T>] {
        &self.conserved
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact_solution(&self, t: f64) -> Option<Dense<T>> {
        self.exact.as_ref().map(|f| f(t))
    }

    pub fn rhs(&self, t: f64, y: &Dense<T>) -> Dense<T> {
        match &self.rhs {
            Rhs::Linear(ls) => ls.apply(y),
            Rhs::General(f) => f(t, y),
        }
    }

    /// `F(t, U S V^*) W`.
    pub fn rhs_times(
        &self,
        t: f64,
        u: &Dense<T>,
        s: &Dense<T>,
        v: &Dense<T>,
        w: &Dense<T>,
    ) -> Dense<T> {
        match &self.rhs {
            Rhs::Linear(ls) => ls.apply_factored(u, s, v, w),
            Rhs::General(f) => f(t, &(u * s * v.adjoint())) * w,
        }
    }

    /// `F(t, U S V^*)^* W`.
    pub fn rhs_adjoint_times(
        &self,
        t: f64,
        u: &Dense<T>,
        s: &Dense<T>,
        v: &Dense<T>,
        w: &Dense<T>,
    ) -> Dense<T> {
        match (&self.rhs, &self.adjoint) {
            (Rhs::Linear(_), Some(adj)) => adj.apply_factored(v, &s.adjoint(), u, w),
            _ => f_adjoint_dense(self.rhs(t, &(u * s * v.adjoint())), w),
        }
    }

    /// The time-reversed problem `A' = -F(t, A)`; linear structure is kept.
    pub fn reversed(&self) -> Self {
        let rhs = match &self.rhs {
            Rhs::Linear(ls) => Rhs::Linear(ls.clone().scaled(-1.0)),
            Rhs::General(f) => {
                let f = Arc::clone(f);
                Rhs::General(Arc::new(move |t, y| -f(t, y)))
            }
        };
        let mut out = Self::new(format!("{}-reversed", self.name), rhs, self.initial.clone());
        out.conserved = self.conserved.clone();
        out
    }
}

fn f_adjoint_dense<T: Scalar>(f: Dense<T>, w: &Dense<T>) -> Dense<T> {
    f.adjoint() * w
}
