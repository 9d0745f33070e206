//! Scalar fields the integrators run over.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rand::Rng;
use std::fmt::Debug;

/// Dense column-major matrix over a scalar field.
pub type Dense<T> = DMatrix<T>;

/// A real or complex scalar with `f64` as its real field.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + Debug + 'static {
    const IS_COMPLEX: bool;

    /// A sample with real (and imaginary) parts uniform in `[-1, 1)`.
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Build from real and imaginary parts; the imaginary part is dropped for real fields.
    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64 {
        ComplexField::real(self)
    }

    fn im(self) -> f64 {
        ComplexField::imaginary(self)
    }
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen_range(-1.0..1.0)
    }

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
}

/// Random dense matrix with entries drawn by [`Scalar::sample`].
pub fn random_dense<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Dense<T> {
    Dense::from_fn(rows, cols, |_, _| T::sample(rng))
}

/// Real part of the Frobenius inner product `trace(A^* B)`.
pub fn inner_re<T: Scalar>(a: &Dense<T>, b: &Dense<T>) -> f64 {
    inner(a, b).re()
}

/// Frobenius inner product `<A, B> = trace(A^* B)`, conjugate-linear in `A`.
pub fn inner<T: Scalar>(a: &Dense<T>, b: &Dense<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + x.conjugate() * *y)
}
