//! Factored low-rank matrices `Y = U S V^*`, the tangent-space projection at
//! such a matrix, and SVD-based rank truncation.

use crate::error::{Error, Result};
use crate::linalg::{orth_span, svd};
use crate::scalar::{Dense, Scalar};

/// Orthonormality tolerance re-checked on every produced state.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Rank-`r` matrix `U S V^*` with orthonormal `U` (`m x r`), `V` (`n x r`)
/// and a dense, not necessarily diagonal, core `S` (`r x r`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState<T: Scalar> {
    u: Dense<T>,
    s: Dense<T>,
    v: Dense<T>,
}

impl<T: Scalar> LowRankState<T> {
    pub fn new(u: Dense<T>, s: Dense<T>, v: Dense<T>) -> Result<Self> {
        let state = Self { u, s, v };
        state.validate()?;
        Ok(state)
    }

    /// Best rank-limited approximation of a dense matrix.
    pub fn from_dense(a: &Dense<T>, policy: TruncationPolicy) -> Result<Self> {
        let m = a.nrows();
        let n = a.ncols();
        truncate(
            &Dense::identity(m, m),
            a,
            &Dense::identity(n, n),
            policy,
        )
    }

    pub fn zeros(m: usize, n: usize, r: usize) -> Result<Self> {
        if r == 0 || r > m.min(n) {
            return Err(Error::invalid(format!("rank {r} outside 1..={}", m.min(n))));
        }
        Self::new(
            Dense::identity(m, r),
            Dense::zeros(r, r),
            Dense::identity(n, r),
        )
    }

    pub fn u(&self) -> &Dense<T> {
        &self.u
    }

    pub fn s(&self) -> &Dense<T> {
        &self.s
    }

    pub fn v(&self) -> &Dense<T> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn into_parts(self) -> (Dense<T>, Dense<T>, Dense<T>) {
        (self.u, self.s, self.v)
    }

    pub fn assemble(&self) -> Dense<T> {
        &self.u * &self.s * self.v.adjoint()
    }

    /// Frobenius norm of `U S V^*`, read off the core.
    pub fn norm(&self) -> f64 {
        self.s.norm()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.s, &self.v]
            .iter()
            .all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Largest of `||U^*U - I||_F` and `||V^*V - I||_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        let id = Dense::<T>::identity(r, r);
        let du = (self.u.adjoint() * &self.u - &id).norm();
        let dv = (self.v.adjoint() * &self.v - &id).norm();
        du.max(dv)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.s.nrows();
        if r == 0 || self.s.ncols() != r || self.u.ncols() != r || self.v.ncols() != r {
            return Err(Error::invalid(format!(
                "inconsistent factor shapes: U {}x{}, S {}x{}, V {}x{}",
                self.u.nrows(),
                self.u.ncols(),
                self.s.nrows(),
                self.s.ncols(),
                self.v.nrows(),
                self.v.ncols()
            )));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("low-rank factors"));
        }
        let defect = self.orthonormality_defect();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!(
                "factors are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(())
    }

    /// Same matrix (or its best approximation) at rank `r`: truncates when
    /// `r` is below the current rank, pads with orthonormal complement
    /// columns and zero singular values when above.
    pub fn with_rank(&self, r: usize) -> Result<Self> {
        let (m, n) = (self.rows(), self.cols());
        if r == 0 || r > m.min(n) {
            return Err(Error::invalid(format!("rank {r} outside 1..={}", m.min(n))));
        }
        if r <= self.rank() {
            return truncate(&self.u, &self.s, &self.v, TruncationPolicy::FixedRank(r));
        }
        let u = orth_span(&[&self.u, &Dense::identity(m, m)]).columns(0, r).into_owned();
        let v = orth_span(&[&self.v, &Dense::identity(n, n)]).columns(0, r).into_owned();
        let s = u.adjoint() * &self.u * &self.s * (self.v.adjoint() * &v);
        Self::new(u, s, v)
    }
}

/// How an augmented factorization is cut back after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    FixedRank(usize),
    /// Smallest rank whose discarded tail `sqrt(sum sigma_i^2)` is at most
    /// `tol`, capped at `max_rank`.
    Tolerance { tol: f64, max_rank: usize },
}

impl TruncationPolicy {
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let cap = m.min(n);
        match *self {
            TruncationPolicy::FixedRank(r) if r == 0 || r > cap => {
                Err(Error::invalid(format!("fixed rank {r} outside 1..={cap}")))
            }
            TruncationPolicy::Tolerance { tol, max_rank } => {
                if !(tol >= 0.0) || !tol.is_finite() {
                    Err(Error::invalid(format!("truncation tolerance {tol} must be >= 0")))
                } else if max_rank == 0 || max_rank > cap {
                    Err(Error::invalid(format!("max rank {max_rank} outside 1..={cap}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Number of singular values retained from a nonincreasing spectrum.
    pub fn retained_rank(&self, singular_values: &[f64]) -> usize {
        let available = singular_values.len();
        let r = match *self {
            TruncationPolicy::FixedRank(r) => r,
            TruncationPolicy::Tolerance { tol, max_rank } => {
                let mut tail = 0.0;
                let mut keep = available;
                while keep > 0 {
                    let s = singular_values[keep - 1];
                    if tail + s * s > tol * tol {
                        break;
                    }
                    tail += s * s;
                    keep -= 1;
                }
                keep.min(max_rank)
            }
        };
        r.clamp(1, available.max(1))
    }
}

/// Truncate `Uhat Shat Vhat^*` via an SVD of the (possibly rectangular) core.
pub fn truncate<T: Scalar>(
    uhat: &Dense<T>,
    shat: &Dense<T>,
    vhat: &Dense<T>,
    policy: TruncationPolicy,
) -> Result<LowRankState<T>> {
    if uhat.ncols() != shat.nrows() || vhat.ncols() != shat.ncols() {
        return Err(Error::invalid(format!(
            "truncate: U has {} columns, S is {}x{}, V has {} columns",
            uhat.ncols(),
            shat.nrows(),
            shat.ncols(),
            vhat.ncols()
        )));
    }
    let dec = svd(shat)?;
    let keep = policy.retained_rank(&dec.singular_values);
    let u = uhat * dec.left.columns(0, keep);
    let v = vhat * dec.right.columns(0, keep);
    let s = Dense::from_fn(keep, keep, |i, j| {
        if i == j {
            T::from_real(dec.singular_values[i])
        } else {
            T::zero()
        }
    });
    LowRankState::new(u, s, v)
}

fn check_conformable<T: Scalar>(y: &LowRankState<T>, z: &Dense<T>) -> Result<()> {
    if z.nrows() != y.rows() || z.ncols() != y.cols() {
        return Err(Error::invalid(format!(
            "matrix is {}x{} but the state is {}x{}",
            z.nrows(),
            z.ncols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

/// Orthogonal projection onto the tangent space of the rank-`r` manifold at
/// `Y`: `Z V V^* - U U^* Z V V^* + U U^* Z`.
pub fn tangent_project<T: Scalar>(y: &LowRankState<T>, z: &Dense<T>) -> Result<Dense<T>> {
    check_conformable(y, z)?;
    let (u, v) = (y.u(), y.v());
    let zv = z * v;
    let uz = u.adjoint() * z;
    let uzv = &uz * v;
    Ok(&zv * v.adjoint() + u * (uz - uzv * v.adjoint()))
}

/// `||Z - P(Y) Z||_F`.
pub fn normal_component_norm<T: Scalar>(y: &LowRankState<T>, z: &Dense<T>) -> Result<f64> {
    Ok((z - tangent_project(y, z)?).norm())
}

/// Measured normal component of the vector field at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalComponentDiagnostic {
    pub epsilon_estimate: f64,
    pub rank_at_measurement: usize,
    pub time: f64,
}

/// `||assemble(Y) - A_ref||_F`.
pub fn frobenius_error<T: Scalar>(y: &LowRankState<T>, a_ref: &Dense<T>) -> Result<f64> {
    check_conformable(y, a_ref)?;
    Ok((y.assemble() - a_ref).norm())
}

/// `||assemble(Y) - A_ref||_F / ||A_ref||_F`.
pub fn relative_error<T: Scalar>(y: &LowRankState<T>, a_ref: &Dense<T>) -> Result<f64> {
    let reference = a_ref.norm();
    if reference == 0.0 {
        return Err(Error::invalid("relative error against a zero reference"));
    }
    Ok(frobenius_error(y, a_ref)? / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orth;
    use crate::scalar::random_dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(m: usize, n: usize, r: usize, seed: u64) -> LowRankState<f64> {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        LowRankState::new(
            orth(&random_dense(m, r, &mut g)).unwrap(),
            random_dense(r, r, &mut g),
            orth(&random_dense(n, r, &mut g)).unwrap(),
        )
        .unwrap()
    }

    fn e1_state() -> LowRankState<f64> {
        let e1 = Dense::from_column_slice(2, 1, &[1.0, 0.0]);
        LowRankState::new(e1.clone(), Dense::from_element(1, 1, 1.0), e1).unwrap()
    }

    #[test]
    fn assemble_small_cases() {
        let e1 = Dense::from_column_slice(2, 1, &[1.0, 0.0]);
        let y = LowRankState::new(e1.clone(), Dense::from_element(1, 1, 2.0), e1).unwrap();
        assert_eq!(y.assemble(), Dense::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        let z = LowRankState::<f64>::zeros(4, 3, 2).unwrap();
        assert_eq!(z.assemble().norm(), 0.0);
    }

    #[test]
    fn assemble_then_svd_recovers_core_spectrum() {
        let y = random_state(10, 10, 3, 1);
        let core = svd(y.s()).unwrap().singular_values;
        let full = svd(&y.assemble()).unwrap().singular_values;
        for i in 0..3 {
            assert!((core[i] - full[i]).abs() <= 1e-12 * core[0]);
        }
        assert!(full[3] <= 1e-12 * core[0]);
    }

    #[test]
    fn new_rejects_non_orthonormal() {
        let u = Dense::from_column_slice(2, 1, &[2.0, 0.0]);
        let err = LowRankState::new(u.clone(), Dense::identity(1, 1), u).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn tangent_projection_two_by_two() {
        let y = e1_state();
        let z = Dense::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = tangent_project(&y, &z).unwrap();
        assert_eq!(p, Dense::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.0]));
        let e22 = Dense::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((normal_component_norm(&y, &e22).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tangent_projection_fixes_own_point() {
        let y = random_state(9, 7, 3, 2);
        let a = y.assemble();
        assert!((tangent_project(&y, &a).unwrap() - &a).norm() <= 1e-12 * a.norm());
        assert!(normal_component_norm(&y, &a).unwrap() <= 1e-12 * a.norm());
    }

    #[test]
    fn tangent_projection_dimension_mismatch() {
        let y = random_state(5, 4, 2, 3);
        assert!(tangent_project(&y, &Dense::zeros(4, 4)).is_err());
    }

    #[test]
    fn truncate_by_tolerance() {
        let s = Dense::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1e-9]));
        let id = Dense::<f64>::identity(3, 3);
        let y = truncate(&id, &s, &id, TruncationPolicy::Tolerance { tol: 1e-6, max_rank: 3 })
            .unwrap();
        assert_eq!(y.rank(), 2);
        assert!((y.s()[(0, 0)] - 3.0).abs() < 1e-15 && (y.s()[(1, 1)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn truncate_full_rank_is_noop() {
        let y = random_state(8, 8, 4, 4);
        let t = truncate(y.u(), y.s(), y.v(), TruncationPolicy::FixedRank(4)).unwrap();
        assert!((t.assemble() - y.assemble()).norm() <= 1e-12 * y.norm());
    }

    #[test]
    fn truncate_error_is_svd_tail() {
        let y = random_state(12, 12, 6, 5);
        let sv = svd(y.s()).unwrap().singular_values;
        let tail = sv[3..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let t = truncate(y.u(), y.s(), y.v(), TruncationPolicy::FixedRank(3)).unwrap();
        assert!(((t.assemble() - y.assemble()).norm() - tail).abs() <= 1e-12 * y.norm());
    }

    #[test]
    fn truncate_clamps_and_keeps_rank_one() {
        let id = Dense::<f64>::identity(3, 3);
        let t = truncate(&id, &Dense::zeros(3, 3), &id, TruncationPolicy::FixedRank(3)).unwrap();
        assert_eq!(t.rank(), 3);
        let t = truncate(
            &id,
            &Dense::zeros(3, 3),
            &id,
            TruncationPolicy::Tolerance { tol: 1.0, max_rank: 3 },
        )
        .unwrap();
        assert_eq!(t.rank(), 1);
        let two = Dense::<f64>::identity(3, 2);
        let t = truncate(&two, &Dense::identity(2, 2), &two, TruncationPolicy::FixedRank(3))
            .unwrap();
        assert_eq!(t.rank(), 2);
    }

    #[test]
    fn frobenius_error_cases() {
        let y = LowRankState::<f64>::zeros(5, 5, 1).unwrap();
        let id = Dense::<f64>::identity(5, 5);
        assert!((frobenius_error(&y, &id).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let y = random_state(6, 6, 2, 8);
        assert_eq!(frobenius_error(&y, &y.assemble()).unwrap(), 0.0);
    }

    #[test]
    fn frobenius_error_matches_double_loop() {
        let y = random_state(7, 5, 2, 9);
        let mut g = ChaCha8Rng::seed_from_u64(10);
        let a = random_dense::<f64, _>(7, 5, &mut g);
        let ya = y.assemble();
        let mut sum = 0.0;
        for i in 0..7 {
            for j in 0..5 {
                sum += (ya[(i, j)] - a[(i, j)]).powi(2);
            }
        }
        assert!((frobenius_error(&y, &a).unwrap() - sum.sqrt()).abs() < 1e-12);
        assert!(relative_error(&y, &Dense::zeros(7, 5)).is_err());
    }

    #[test]
    fn with_rank_pads_and_truncates() {
        let y = random_state(8, 6, 2, 11);
        let up = y.with_rank(4).unwrap();
        assert_eq!(up.rank(), 4);
        assert!((up.assemble() - y.assemble()).norm() <= 1e-12 * y.norm());
        let down = up.with_rank(2).unwrap();
        assert!((down.assemble() - y.assemble()).norm() <= 1e-12 * y.norm());
        assert!(y.with_rank(7).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::FixedRank(0).validate(4, 4).is_err());
        assert!(TruncationPolicy::FixedRank(5).validate(4, 6).is_err());
        assert!(TruncationPolicy::Tolerance { tol: -1.0, max_rank: 2 }.validate(4, 4).is_err());
        assert!(TruncationPolicy::Tolerance { tol: 0.0, max_rank: 4 }.validate(4, 4).is_ok());
    }
}
