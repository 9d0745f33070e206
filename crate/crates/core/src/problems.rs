//! Reference problems: the stiff heat/Lyapunov equation with a closed-form
//! solution, the non-stiff discrete Schrödinger equation, a synthetic
//! problem whose flow stays exactly on the rank-`r` manifold, and small
//! random test problems.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{expm, orth, sylvester_solve, HermitianEig};
use crate::lowrank::{LowRankState, TruncationPolicy};
use crate::problem::{Conserved, LinearStructure, LinearTerm, MatrixOdeProblem, Operator, Rhs};
use crate::scalar::{random_dense, Dense, Scalar};

/// Number of sine modes in the heat initial factorization.
pub const HEAT_MODES: usize = 20;
/// Number of Gaussian source terms in the heat problem.
pub const HEAT_SOURCE_TERMS: usize = 11;

/// `tridiag(1, -2, 1) / dx^2`.
pub fn dirichlet_laplacian(n: usize, dx: f64) -> Dense<f64> {
    let w = 1.0 / (dx * dx);
    Dense::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 * w,
        1 => w,
        _ => 0.0,
    })
}

/// `tridiag(1, -2, 1)` plus the two periodic corner entries.
pub fn periodic_laplacian(n: usize) -> Dense<f64> {
    let mut d = dirichlet_laplacian(n, 1.0);
    d[(0, n - 1)] = 1.0;
    d[(n - 1, 0)] = 1.0;
    d
}

/// Grid spacing of the heat problem: `n` interior nodes of `[-pi, pi]`.
pub fn heat_grid_spacing(n: usize) -> f64 {
    2.0 * PI / (n as f64 + 1.0)
}

fn heat_source(x: f64, y: f64) -> f64 {
    (1..=HEAT_SOURCE_TERMS)
        .map(|k| 10f64.powi(-(k as i32 - 1)) * (-(k as f64) * (x * x + y * y)).exp())
        .sum()
}

/// Discretized heat equation `A' = Dxx A + A Dyy^T + G` on `[-pi, pi]^2`
/// with homogeneous Dirichlet boundary conditions and `n` interior nodes per
/// direction. The exact solution is
/// `A(t) = e^{t Dxx} (A(0) + X) e^{t Dyy^T} - X` with `Dxx X + X Dyy^T = G`.
pub fn heat_problem(n: usize) -> Result<MatrixOdeProblem<f64>> {
    if n < 8 {
        return Err(Error::invalid(format!("heat problem needs N >= 8, got {n}")));
    }
    let dx = heat_grid_spacing(n);
    let grid: Vec<f64> = (1..=n).map(|i| -PI + i as f64 * dx).collect();
    let laplacian = dirichlet_laplacian(n, dx);
    let source = Dense::from_fn(n, n, |i, j| heat_source(grid[i], grid[j]));

    // sin(k x_i) on this grid is orthogonal for 2k <= n.
    let modes = HEAT_MODES.min(n / 2);
    let scale = (dx / PI).sqrt();
    let u0 = Dense::from_fn(n, modes, |i, k| scale * ((k + 1) as f64 * grid[i]).sin());
    let mut s0 = Dense::zeros(modes, modes);
    s0[(0, 0)] = PI / dx;
    let initial = LowRankState::new(u0.clone(), s0, u0)?;

    let d_xx = Operator::new(laplacian.clone());
    // Dyy has the same stencil; its transpose is itself.
    let d_yy_t = Arc::clone(&d_xx);
    let structure = LinearStructure::new(
        n,
        n,
        vec![
            LinearTerm { coeff: 1.0, left: Some(Arc::clone(&d_xx)), right: None },
            LinearTerm { coeff: 1.0, left: None, right: Some(d_yy_t) },
        ],
        Some(source.clone()),
    )?;

    let shift = sylvester_solve(&laplacian, &laplacian, &source)?;
    let eig = HermitianEig::new(&laplacian)?;
    let a0_plus_x = initial.assemble() + &shift;
    let exact = move |t: f64| {
        let left = eig.exp_apply(t, &a0_plus_x);
        eig.exp_apply(t, &left.transpose()).transpose() - &shift
    };

    Ok(MatrixOdeProblem::new("heat", Rhs::Linear(structure), initial)
        .with_exact_solution(Arc::new(exact)))
}

/// Grid point `x_j = 2 pi j / n`, `j = -n/2 .. n/2 - 1`, of the periodic problem.
pub fn periodic_grid(n: usize) -> Vec<f64> {
    let half = (n / 2) as i64;
    (-half..half).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// `diag(1 - cos(2 pi j / n))`, `j = -n/2 .. n/2 - 1`.
pub fn cosine_potential(n: usize) -> Dense<f64> {
    let diag: Vec<f64> = periodic_grid(n).iter().map(|x| 1.0 - x.cos()).collect();
    Dense::from_diagonal(&nalgebra::DVector::from_vec(diag))
}

/// `H[Y] = -1/2 (D Y + Y D^T) + Vcos Y Vcos` as a linear structure.
pub fn schrodinger_hamiltonian(n: usize) -> Result<LinearStructure<Complex64>> {
    let d = Operator::new(periodic_laplacian(n).map(|x| Complex64::new(x, 0.0)));
    let v = Operator::new(cosine_potential(n).map(|x| Complex64::new(x, 0.0)));
    LinearStructure::new(
        n,
        n,
        vec![
            LinearTerm { coeff: Complex64::new(-0.5, 0.0), left: Some(Arc::clone(&d)), right: None },
            LinearTerm { coeff: Complex64::new(-0.5, 0.0), left: None, right: Some(d) },
            LinearTerm { coeff: Complex64::new(1.0, 0.0), left: Some(Arc::clone(&v)), right: Some(v) },
        ],
        None,
    )
}

/// Discrete Schrödinger equation `i Y' = H[Y]` with periodic boundary
/// conditions and a normalized separable Gaussian initial value.
pub fn schrodinger_problem(n: usize) -> Result<MatrixOdeProblem<Complex64>> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "Schrödinger problem needs an even N >= 8, got {n}"
        )));
    }
    let hamiltonian = schrodinger_hamiltonian(n)?;
    // F(Y) = -i H[Y]
    let rhs = LinearStructure::new(
        n,
        n,
        hamiltonian
            .terms()
            .iter()
            .map(|t| LinearTerm {
                coeff: t.coeff * Complex64::new(0.0, -1.0),
                left: t.left.clone(),
                right: t.right.clone(),
            })
            .collect(),
        None,
    )?;

    let grid = periodic_grid(n);
    let gx: Vec<f64> = grid.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let gy: Vec<f64> = grid.iter().map(|y| (-0.5 * (y - 1.0) * (y - 1.0)).exp()).collect();
    let nx = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = gy.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Normalizing both factors normalizes u0 in the Frobenius norm.
    let u = Dense::from_fn(n, 1, |i, _| Complex64::new(gx[i] / nx, 0.0));
    let v = Dense::from_fn(n, 1, |j, _| Complex64::new(gy[j] / ny, 0.0));
    let initial = LowRankState::new(u, Dense::from_element(1, 1, Complex64::new(1.0, 0.0)), v)?;

    Ok(MatrixOdeProblem::new("schrodinger", Rhs::Linear(rhs), initial)
        .with_conserved(vec![Conserved::Norm, Conserved::Energy(hamiltonian)]))
}

/// Smooth rank-`r` path `A(t) = U(t) S(t) V(t)^T` with
/// `U(t) = e^{t Wu} U0`, `V(t) = e^{t Wv} V0` (skew `Wu`, `Wv`) and a
/// trigonometric core. `F(t, Y) = A'(t)` ignores `Y`, so the vector field is
/// tangent to the rank-`r` manifold along the exact solution.
#[derive(Debug, Clone)]
pub struct TangentialPath {
    u0: Dense<f64>,
    v0: Dense<f64>,
    skew_u: Dense<f64>,
    skew_v: Dense<f64>,
    base: Dense<f64>,
    amplitude: Dense<f64>,
    frequency: Dense<f64>,
    phase: Dense<f64>,
}

impl TangentialPath {
    pub fn new(m: usize, n: usize, r: usize, seed: u64) -> Result<Self> {
        if r == 0 || r > m.min(n) {
            return Err(Error::invalid(format!("rank {r} outside 1..={}", m.min(n))));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skew = |k: usize, rng: &mut ChaCha8Rng| {
            let a: Dense<f64> = random_dense(k, k, rng);
            (&a - a.transpose()).scale(1.0 / (k as f64).sqrt())
        };
        let u0 = orth(&random_dense(m, r, &mut rng))?;
        let v0 = orth(&random_dense(n, r, &mut rng))?;
        let skew_u = skew(m, &mut rng);
        let skew_v = skew(n, &mut rng);
        // Graded singular values 1, 1/2, 1/4, ... with small couplings.
        let grade = |k: usize| 0.5f64.powi(k as i32);
        let base = Dense::from_fn(r, r, |i, j| if i == j { grade(i) } else { 0.0 });
        let amplitude = Dense::from_fn(r, r, |i, j| {
            if i == j {
                0.3 * grade(i)
            } else {
                0.1 * grade(i.max(j))
            }
        });
        let frequency = Dense::from_fn(r, r, |_, _| 1.0 + 2.0 * f64::sample(&mut rng).abs());
        let phase = Dense::from_fn(r, r, |_, _| PI * f64::sample(&mut rng));
        Ok(Self { u0, v0, skew_u, skew_v, base, amplitude, frequency, phase })
    }

    pub fn u(&self, t: f64) -> Dense<f64> {
        expm(&self.skew_u.scale(t)) * &self.u0
    }

    pub fn v(&self, t: f64) -> Dense<f64> {
        expm(&self.skew_v.scale(t)) * &self.v0
    }

    pub fn s(&self, t: f64) -> Dense<f64> {
        Dense::from_fn(self.base.nrows(), self.base.ncols(), |i, j| {
            self.base[(i, j)]
                + self.amplitude[(i, j)] * (self.frequency[(i, j)] * t + self.phase[(i, j)]).sin()
        })
    }

    pub fn s_dot(&self, t: f64) -> Dense<f64> {
        Dense::from_fn(self.base.nrows(), self.base.ncols(), |i, j| {
            let w = self.frequency[(i, j)];
            self.amplitude[(i, j)] * w * (w * t + self.phase[(i, j)]).cos()
        })
    }

    pub fn value(&self, t: f64) -> Dense<f64> {
        self.u(t) * self.s(t) * self.v(t).transpose()
    }

    /// `A' = Wu A + U S' V^T + A Wv^T`.
    pub fn derivative(&self, t: f64) -> Dense<f64> {
        let u = self.u(t);
        let v = self.v(t);
        let a = &u * self.s(t) * v.transpose();
        &self.skew_u * &a + u * self.s_dot(t) * v.transpose() + a * self.skew_v.transpose()
    }

    pub fn state(&self, t: f64) -> Result<LowRankState<f64>> {
        LowRankState::new(self.u(t), self.s(t), self.v(t))
    }
}

pub fn synthetic_tangential_problem(
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<MatrixOdeProblem<f64>> {
    let path = Arc::new(TangentialPath::new(m, n, r, seed)?);
    let initial = path.state(0.0)?;
    let rhs_path = Arc::clone(&path);
    let exact_path = Arc::clone(&path);
    Ok(MatrixOdeProblem::new(
        "synthetic",
        Rhs::General(Arc::new(move |t, _y: &Dense<f64>| rhs_path.derivative(t))),
        initial,
    )
    .with_exact_solution(Arc::new(move |t| exact_path.value(t))))
}

/// `F = 0` with a seeded random rank-`r` initial value.
pub fn zero_problem<T: Scalar>(m: usize, n: usize, r: usize, seed: u64) -> Result<MatrixOdeProblem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = LowRankState::new(
        orth(&random_dense(m, r, &mut rng))?,
        random_dense(r, r, &mut rng),
        orth(&random_dense(n, r, &mut rng))?,
    )?;
    let a0 = initial.assemble();
    let rhs = LinearStructure::new(m, n, Vec::new(), None)?;
    Ok(MatrixOdeProblem::new("zero", Rhs::Linear(rhs), initial)
        .with_exact_solution(Arc::new(move |_| a0.clone()))
        .with_conserved(vec![Conserved::Norm]))
}

/// Options for [`random_linear_problem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomLinearOptions {
    /// Symmetric negative semidefinite-shifted coefficients (exact-affine capable).
    pub symmetric: bool,
    /// Include a dense source term; without one, the rank of the initial value is preserved.
    pub source: bool,
}

/// `F(Y) = A Y + Y B (+ C)` on `n x n` with unit-scale random coefficients
/// and a random rank-`rank` initial value.
pub fn random_linear_problem(
    n: usize,
    rank: usize,
    seed: u64,
    options: RandomLinearOptions,
) -> Result<MatrixOdeProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeff = |rng: &mut ChaCha8Rng| {
        let a: Dense<f64> = random_dense(n, n, rng);
        if options.symmetric {
            (&a + a.transpose()).scale(0.5) - Dense::identity(n, n).scale(0.5)
        } else {
            a
        }
    };
    let a = coeff(&mut rng);
    let b = coeff(&mut rng);
    let source = options.source.then(|| random_dense::<f64, _>(n, n, &mut rng));
    let initial = LowRankState::from_dense(
        &(random_dense::<f64, _>(n, rank, &mut rng) * random_dense::<f64, _>(rank, n, &mut rng)),
        TruncationPolicy::FixedRank(rank),
    )?;
    let structure = LinearStructure::new(
        n,
        n,
        vec![
            LinearTerm { coeff: 1.0, left: Some(Operator::new(a)), right: None },
            LinearTerm { coeff: 1.0, left: None, right: Some(Operator::new(b)) },
        ],
        source,
    )?;
    Ok(MatrixOdeProblem::new("random-linear", Rhs::Linear(structure), initial))
}
