//! Dense kernels shared by every integrator: orthonormalization, SVD,
//! matrix exponential actions and Sylvester solves, over real or complex
//! fields.

use nalgebra::linalg::{SymmetricEigen, QR, SVD};

use crate::error::{Error, Result};
use crate::scalar::{Dense, Scalar};

const SVD_MAX_ITERATIONS: usize = 100_000;
const EIGEN_MAX_ITERATIONS: usize = 100_000;

/// Singular value decomposition `A = left * diag(singular_values) * right^*`.
#[derive(Debug, Clone)]
pub struct SvdTriple<T: Scalar> {
    pub left: Dense<T>,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub right: Dense<T>,
}

impl<T: Scalar> SvdTriple<T> {
    pub fn reconstruct(&self) -> Dense<T> {
        let mut scaled = self.left.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.right.adjoint()
    }
}

/// Eigendecomposition `A = vectors * diag(values) * vectors^*` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig<T: Scalar> {
    pub vectors: Dense<T>,
    pub values: Vec<f64>,
}

impl<T: Scalar> HermitianEig<T> {
    pub fn new(a: &Dense<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let sym = hermitian_part(a);
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITERATIONS).ok_or(
            Error::NoConvergence {
                routine: "hermitian eigensolver",
                iterations: EIGEN_MAX_ITERATIONS,
            },
        )?;
        Ok(Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
        })
    }

    /// `exp(t * A) * B`.
    pub fn exp_apply(&self, t: f64, b: &Dense<T>) -> Dense<T> {
        let mut coeffs = self.vectors.adjoint() * b;
        for (i, &lambda) in self.values.iter().enumerate() {
            coeffs.row_mut(i).scale_mut((t * lambda).exp());
        }
        &self.vectors * coeffs
    }
}

/// `(A + A^*) / 2`.
pub fn hermitian_part<T: Scalar>(a: &Dense<T>) -> Dense<T> {
    (a + a.adjoint()).scale(0.5)
}

/// True when `A` is square and `||A - A^*||_F <= rel_tol * ||A||_F`.
pub fn is_hermitian<T: Scalar>(a: &Dense<T>, rel_tol: f64) -> bool {
    a.is_square() && (a - a.adjoint()).norm() <= rel_tol * a.norm().max(f64::MIN_POSITIVE)
}

/// Horizontal concatenation of blocks with equal row counts.
pub fn hcat<T: Scalar>(blocks: &[&Dense<T>]) -> Dense<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Dense::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat: row mismatch");
        out.columns_mut(offset, b.ncols()).copy_from(*b);
        offset += b.ncols();
    }
    out
}

/// Thin Householder QR with the diagonal of `R` made real and nonnegative.
///
/// For `k > m` columns, `Q` is `m x m` and `R` is `m x k`.
pub fn qr<T: Scalar>(a: &Dense<T>) -> (Dense<T>, Dense<T>) {
    let qr = QR::new(a.clone());
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        let d = r[(j, j)];
        let modulus = d.modulus();
        if modulus > 0.0 {
            let phase = d.unscale(modulus);
            q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
            r.row_mut(j).iter_mut().for_each(|x| *x *= phase.conjugate());
        }
    }
    (q, r)
}

/// Orthonormal basis of `m x k` columns whose span contains `range(A)`.
///
/// Rank-deficient inputs still yield `k` orthonormal columns: the trailing
/// Householder columns complete the basis.
pub fn orth<T: Scalar>(a: &Dense<T>) -> Result<Dense<T>> {
    if a.ncols() == 0 || a.nrows() < a.ncols() {
        return Err(Error::invalid(format!(
            "orth needs m >= k >= 1, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(qr(a).0)
}

/// Orthonormal basis spanning the range of the concatenated blocks.
///
/// Unlike [`orth`], the total width may exceed the row count; the basis is
/// then capped at `m` columns (the whole space).
pub fn orth_span<T: Scalar>(blocks: &[&Dense<T>]) -> Dense<T> {
    qr(&hcat(blocks)).0
}

/// Orthonormal basis of `range(base) + range(extra)` whose leading columns
/// are `base`. Directions of `extra` orthogonal to `base` are kept when
/// their singular values exceed `tol`.
pub fn augment_basis<T: Scalar>(base: &Dense<T>, extra: &Dense<T>, tol: f64) -> Result<Dense<T>> {
    let m = base.nrows();
    if base.ncols() >= m {
        return Ok(base.clone());
    }
    let mut residual = extra - base * (base.adjoint() * extra);
    // second pass of block Gram-Schmidt
    residual -= base * (base.adjoint() * &residual);
    let svd = svd(&residual)?;
    let keep = svd
        .singular_values
        .iter()
        .take(m - base.ncols())
        .take_while(|&&s| s > tol)
        .count();
    if keep == 0 {
        return Ok(base.clone());
    }
    let fresh = svd.left.columns(0, keep).into_owned();
    Ok(orth_span(&[base, &fresh]))
}

pub fn svd<T: Scalar>(a: &Dense<T>) -> Result<SvdTriple<T>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let dec = SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_MAX_ITERATIONS).ok_or(
        Error::NoConvergence {
            routine: "svd",
            iterations: SVD_MAX_ITERATIONS,
        },
    )?;
    let left = dec.u.expect("left singular vectors requested");
    let right = dec.v_t.expect("right singular vectors requested").adjoint();
    Ok(SvdTriple {
        left,
        singular_values: dec.singular_values.iter().copied().collect(),
        right,
    })
}

/// `exp(t M) B`.
///
/// Hermitian `M` goes through its eigendecomposition; anything else through
/// Taylor scaling-and-squaring.
pub fn expm_multiply<T: Scalar>(m: &Dense<T>, t: f64, b: &Dense<T>) -> Result<Dense<T>> {
    if !m.is_square() || m.ncols() != b.nrows() {
        return Err(Error::invalid(format!(
            "expm_multiply: M is {}x{}, B is {}x{}",
            m.nrows(),
            m.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::invalid("expm_multiply: t must be finite"));
    }
    if t == 0.0 {
        return Ok(b.clone());
    }
    if is_hermitian(m, 1e-14) {
        return Ok(HermitianEig::new(m)?.exp_apply(t, b));
    }
    Ok(expm(&m.scale(t)) * b)
}

/// Dense matrix exponential by Taylor series with scaling and squaring.
pub fn expm<T: Scalar>(a: &Dense<T>) -> Dense<T> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.unscale(2f64.powi(squarings));
    let mut sum = Dense::<T>::identity(n, n);
    let mut term = Dense::<T>::identity(n, n);
    for k in 1..=30 {
        term = (&term * &scaled).unscale(k as f64);
        sum += &term;
        if term.norm() <= f64::EPSILON * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Solve `P X + X Q^T = C` for Hermitian `P` and `Q`.
pub fn sylvester_solve<T: Scalar>(p: &Dense<T>, q: &Dense<T>, c: &Dense<T>) -> Result<Dense<T>> {
    if !p.is_square() || !q.is_square() || c.nrows() != p.nrows() || c.ncols() != q.nrows() {
        return Err(Error::invalid(format!(
            "sylvester_solve: P {}x{}, Q {}x{}, C {}x{}",
            p.nrows(),
            p.ncols(),
            q.nrows(),
            q.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if !is_hermitian(p, 1e-12) || !is_hermitian(q, 1e-12) {
        return Err(Error::invalid(
            "sylvester_solve supports Hermitian coefficient matrices only",
        ));
    }
    let ep = HermitianEig::new(p)?;
    let eq = HermitianEig::new(&q.transpose())?;
    let scale = ep.values.iter().chain(&eq.values).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut gap = f64::INFINITY;
    let mut coeffs = ep.vectors.adjoint() * c * &eq.vectors;
    for j in 0..coeffs.ncols() {
        for i in 0..coeffs.nrows() {
            let denom = ep.values[i] + eq.values[j];
            gap = gap.min(denom.abs());
            coeffs[(i, j)] = coeffs[(i, j)].unscale(denom);
        }
    }
    if gap <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularPencil { gap });
    }
    Ok(&ep.vectors * coeffs * eq.vectors.adjoint())
}
