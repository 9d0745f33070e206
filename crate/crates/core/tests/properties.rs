use bug_dlra::linalg::{augment_basis, expm, expm_multiply, orth, qr, svd, sylvester_solve};
use bug_dlra::lowrank::{normal_component_norm, tangent_project, truncate};
use bug_dlra::problems::{random_linear_problem, RandomLinearOptions};
use bug_dlra::scalar::{inner, random_dense};
use bug_dlra::{
    step, Complex64, Dense, IntegratorKind, LowRankState, Scalar, StepSettings, SubstepSolver,
    TruncationPolicy,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_state<T: Scalar>(m: usize, n: usize, r: usize, rng: &mut ChaCha8Rng) -> LowRankState<T> {
    LowRankState::new(
        orth(&random_dense::<T, _>(m, r, rng)).unwrap(),
        random_dense(r, r, rng),
        orth(&random_dense::<T, _>(n, r, rng)).unwrap(),
    )
    .unwrap()
}

fn identity_defect<T: Scalar>(q: &Dense<T>) -> f64 {
    (q.adjoint() * q - Dense::<T>::identity(q.ncols(), q.ncols())).norm()
}

fn projection_laws<T: Scalar>(m: usize, n: usize, r: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = random_state::<T>(m, n, r, &mut rng);
    let z: Dense<T> = random_dense(m, n, &mut rng);
    let w: Dense<T> = random_dense(m, n, &mut rng);
    let pz = tangent_project(&y, &z).unwrap();
    let scale = z.norm();
    assert!((tangent_project(&y, &pz).unwrap() - &pz).norm() <= 1e-10 * scale);
    let pw = tangent_project(&y, &w).unwrap();
    assert!((inner(&pz, &w) - inner(&z, &pw)).modulus() <= 1e-10 * scale * w.norm());
    let a = y.assemble();
    assert!((tangent_project(&y, &a).unwrap() - &a).norm() <= 1e-10 * a.norm());
    let normal = normal_component_norm(&y, &z).unwrap();
    assert!((pz.norm_squared() + normal * normal - z.norm_squared()).abs() <= 1e-10 * scale * scale);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qr_is_orthonormal_and_reconstructs(m in 1usize..20, k in 1usize..20, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Dense<Complex64> = random_dense(m, k, &mut rng);
        let (q, r) = qr(&a);
        prop_assert!(identity_defect(&q) <= 1e-12);
        prop_assert!((&q * &r - &a).norm() <= 1e-12 * a.norm().max(1.0));
        for j in 0..r.nrows().min(r.ncols()) {
            prop_assert!(r[(j, j)].im.abs() <= 1e-14 && r[(j, j)].re >= 0.0);
        }
    }

    #[test]
    fn tangent_projection_laws(m in 2usize..24, n in 2usize..24, r in 1usize..6, seed: u64) {
        let r = r.min(m).min(n);
        projection_laws::<f64>(m, n, r, seed);
        projection_laws::<Complex64>(m, n, r, seed ^ 1);
    }

    #[test]
    fn truncation_error_is_discarded_tail(m in 4usize..16, n in 4usize..16, tol in 0.0f64..2.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = m.min(n);
        let u = orth(&random_dense::<f64, _>(m, r, &mut rng)).unwrap();
        let v = orth(&random_dense::<f64, _>(n, r, &mut rng)).unwrap();
        let s: Dense<f64> = random_dense(r, r, &mut rng);
        let full = &u * &s * v.transpose();
        let y = truncate(&u, &s, &v, TruncationPolicy::Tolerance { tol, max_rank: r }).unwrap();
        let sv = svd(&s).unwrap().singular_values;
        let tail = sv[y.rank()..].iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(((y.assemble() - &full).norm() - tail).abs() <= 1e-10);
        prop_assert!(y.rank() == 1 || tail <= tol + 1e-12);
        y.validate().unwrap();
    }

    #[test]
    fn augmented_basis_keeps_base_and_covers_extra(m in 6usize..20, k in 1usize..3, e in 1usize..3, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = orth(&random_dense::<f64, _>(m, k, &mut rng)).unwrap();
        let extra: Dense<f64> = random_dense(m, e, &mut rng);
        let aug = augment_basis(&base, &extra, 0.0).unwrap();
        prop_assert!(identity_defect(&aug) <= 1e-12);
        prop_assert!((aug.columns(0, k) - &base).norm() <= 1e-12);
        prop_assert!((&extra - &aug * (aug.transpose() * &extra)).norm() <= 1e-10 * extra.norm());
    }

    #[test]
    fn sylvester_residual_vanishes(n in 2usize..12, k in 2usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sym = |d: usize, rng: &mut ChaCha8Rng| {
            let a: Dense<f64> = random_dense(d, d, rng);
            &a * a.transpose() + Dense::identity(d, d)
        };
        let p = sym(n, &mut rng);
        let q = sym(k, &mut rng);
        let c: Dense<f64> = random_dense(n, k, &mut rng);
        let x = sylvester_solve(&p, &q, &c).unwrap();
        prop_assert!((&p * &x + &x * q.transpose() - &c).norm() <= 1e-10 * c.norm().max(1.0) * (p.norm() + q.norm()));
    }

    #[test]
    fn expm_paths_agree_for_symmetric_input(n in 1usize..10, t in -1.0f64..1.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Dense<f64> = random_dense(n, n, &mut rng);
        let s = &a + a.transpose();
        let b: Dense<f64> = random_dense(n, 3, &mut rng);
        let eig_path = expm_multiply(&s, t, &b).unwrap();
        let taylor_path = expm(&s.scale(t)) * &b;
        prop_assert!((eig_path - &taylor_path).norm() <= 1e-10 * taylor_path.norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bug_steps_are_gauge_invariant(seed: u64, kind_index in 0usize..8) {
        let kind = IntegratorKind::ALL[kind_index];
        let opts = RandomLinearOptions { symmetric: true, source: true };
        let p = random_linear_problem(10, 3, seed, opts).unwrap();
        let y0 = p.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let pu = orth(&random_dense::<f64, _>(3, 3, &mut rng)).unwrap();
        let qv = orth(&random_dense::<f64, _>(3, 3, &mut rng)).unwrap();
        let y1 = LowRankState::new(y0.u() * &pu, pu.transpose() * y0.s() * &qv, y0.v() * &qv).unwrap();
        let st = StepSettings::new(SubstepSolver::ExactAffine, TruncationPolicy::FixedRank(3));
        let a = step(kind, &p, y0, 0.0, 0.05, &st).unwrap().state.assemble();
        let b = step(kind, &p, &y1, 0.0, 0.05, &st).unwrap().state.assemble();
        prop_assert!((&a - &b).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn exact_affine_equals_tight_adaptive(seed: u64, h in 0.01f64..0.5) {
        let opts = RandomLinearOptions { symmetric: true, source: true };
        let p = random_linear_problem(8, 2, seed, opts).unwrap();
        let st_exact = StepSettings::new(SubstepSolver::ExactAffine, TruncationPolicy::FixedRank(2));
        let st_rk = StepSettings::new(SubstepSolver::Rk45 { rel_tol: 1e-12, abs_tol: 1e-12 }, TruncationPolicy::FixedRank(2));
        let a = step(IntegratorKind::MidpointBug4r, &p, p.initial_state(), 0.0, h, &st_exact).unwrap().state.assemble();
        let b = step(IntegratorKind::MidpointBug4r, &p, p.initial_state(), 0.0, h, &st_rk).unwrap().state.assemble();
        prop_assert!((&a - &b).norm() <= 1e-8 * a.norm().max(1.0));
    }
}
