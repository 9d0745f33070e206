use bug_dlra::integrators::{
    bug_augmented_untruncated, midpoint_bug_3r_untruncated, midpoint_bug_4r_untruncated,
    step_times, trapezoidal_bug_untruncated,
};
use bug_dlra::linalg::orth;
use bug_dlra::lowrank::{frobenius_error, tangent_project};
use bug_dlra::problems::{
    heat_problem, random_linear_problem, schrodinger_problem, synthetic_tangential_problem,
    zero_problem, RandomLinearOptions,
};
use bug_dlra::reference::reference_solution;
use bug_dlra::scalar::random_dense;
use bug_dlra::substep::solve_dense;
use bug_dlra::{
    evolve, evolve_with, step, Complex64, Dense, Error, IntegratorKind, LinearStructure,
    LinearTerm, LowRankState, MatrixOdeProblem, Rhs, Scalar, StepSettings, SubstepSolver,
    TruncationPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TIGHT: SubstepSolver = SubstepSolver::Rk45 { rel_tol: 1e-12, abs_tol: 1e-12 };

fn settings(solver: SubstepSolver, r: usize) -> StepSettings {
    StepSettings::new(solver, TruncationPolicy::FixedRank(r))
}

/// Keep every nonzero singular value.
fn untruncated(solver: SubstepSolver, n: usize) -> StepSettings {
    StepSettings::new(solver, TruncationPolicy::Tolerance { tol: 0.0, max_rank: n })
}

fn residual_outside<T: Scalar>(basis: &Dense<T>, x: &Dense<T>) -> f64 {
    (x - basis * (basis.adjoint() * x)).norm()
}

#[test]
fn names_round_trip() {
    assert_eq!(IntegratorKind::ALL.len(), 8);
    for kind in IntegratorKind::ALL {
        assert_eq!(kind.name().parse::<IntegratorKind>().unwrap(), kind);
        assert_eq!(kind.to_string(), kind.name());
    }
    assert!("midpoint".parse::<IntegratorKind>().is_err());
}

fn zero_field_reproduces<T: Scalar>() {
    let p = zero_problem::<T>(9, 7, 3, 4).unwrap();
    let y0 = p.initial_state();
    for kind in IntegratorKind::ALL {
        for solver in [SubstepSolver::ExactAffine, TIGHT] {
            let r = step(kind, &p, y0, 0.0, 0.1, &settings(solver, 3)).unwrap();
            let err = (r.state.assemble() - y0.assemble()).norm();
            assert!(err <= 1e-12, "{kind}: {err}");
        }
    }
}

#[test]
fn zero_field_reproduces_initial_value() {
    zero_field_reproduces::<f64>();
    zero_field_reproduces::<Complex64>();
}

#[test]
fn galerkin_starting_value_is_initial_value() {
    let p = heat_problem(24).unwrap();
    let y0 = p.initial_state().with_rank(5).unwrap();
    let st = settings(SubstepSolver::ExactAffine, 5);
    let a0 = y0.assemble();
    let check = |x: Dense<f64>, what: &str| {
        let e = (x - &a0).norm();
        assert!(e <= 1e-10 * a0.norm(), "{what}: {e}");
    };
    check(bug_augmented_untruncated(&p, &y0, 0.0, 0.05, &st).unwrap().assemble_start(), "augmented");
    check(midpoint_bug_4r_untruncated(&p, &y0, 0.0, 0.05, &st).unwrap().1.assemble_start(), "4r");
    check(midpoint_bug_3r_untruncated(&p, &y0, 0.0, 0.05, &st).unwrap().1.assemble_start(), "3r");
    check(trapezoidal_bug_untruncated(&p, &y0, 0.0, 0.05, &st).unwrap().1.assemble_start(), "trapezoidal");
}

#[test]
fn midpoint_bases_contain_tangential_midpoint_field() {
    let p = schrodinger_problem(24).unwrap();
    let y0 = p.initial_state().with_rank(3).unwrap();
    let st = settings(TIGHT, 3);
    let h = 0.1;
    let (half, full) = midpoint_bug_4r_untruncated(&p, &y0, 0.0, h, &st).unwrap();
    let y_half = LowRankState::new(half.u.clone(), half.s_end.clone(), half.v.clone()).unwrap();
    let f = p.rhs(0.5 * h, &y_half.assemble());
    let tangential = tangent_project(&y_half, &f).unwrap();
    let scale = tangential.norm();
    assert!(residual_outside(&full.u, &tangential) <= 1e-10 * scale.max(1.0));
    assert!(residual_outside(&full.v, &tangential.adjoint()) <= 1e-10 * scale.max(1.0));
    assert!(residual_outside(&full.u, y0.u()) <= 1e-10);
    assert!(residual_outside(&full.v, y0.v()) <= 1e-10);
}

#[test]
fn rank_bounds_hold() {
    let opts = RandomLinearOptions { symmetric: false, source: true };
    let p = random_linear_problem(30, 3, 9, opts).unwrap();
    let y0 = p.initial_state();
    let st = settings(TIGHT, 3);
    for kind in IntegratorKind::ALL {
        let r = step(kind, &p, y0, 0.0, 0.05, &st).unwrap();
        let bound = match kind {
            IntegratorKind::TrapezoidalBug => 5 * 3,
            _ => kind.rank_multiplier() * 3,
        };
        assert!(r.pre_truncation_rank <= bound, "{kind}: {}", r.pre_truncation_rank);
        assert!(r.pre_truncation_rank >= r.state.rank());
        if !kind.truncates() {
            assert_eq!(r.pre_truncation_rank, 3, "{kind}");
        }
        assert_eq!(r.state.rank(), 3);
        r.state.validate().unwrap();
    }
}

fn unitary<T: Scalar>(k: usize, rng: &mut ChaCha8Rng) -> Dense<T> {
    orth(&random_dense::<T, _>(k, k, rng)).unwrap()
}

fn gauge_invariance<T: Scalar>(p: &MatrixOdeProblem<T>, solver: SubstepSolver, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = p.initial_state();
    let r = y0.rank();
    let (pu, qv) = (unitary::<T>(r, &mut rng), unitary::<T>(r, &mut rng));
    let y1 = LowRankState::new(y0.u() * &pu, pu.adjoint() * y0.s() * &qv, y0.v() * &qv).unwrap();
    for kind in IntegratorKind::ALL {
        let st = settings(solver, r);
        let a = step(kind, p, y0, 0.0, 0.02, &st).unwrap().state.assemble();
        let b = step(kind, p, &y1, 0.0, 0.02, &st).unwrap().state.assemble();
        assert!((&a - &b).norm() <= 1e-10 * a.norm().max(1.0), "{kind}: {}", (&a - &b).norm());
    }
}

#[test]
fn steps_are_invariant_under_factor_gauge() {
    let opts = RandomLinearOptions { symmetric: true, source: true };
    let p = random_linear_problem(12, 3, 21, opts).unwrap();
    gauge_invariance(&p, SubstepSolver::ExactAffine, 1);
    let q = schrodinger_problem(12).unwrap();
    let q = q.clone().with_initial_state(q.initial_state().with_rank(3).unwrap()).unwrap();
    gauge_invariance(&q, TIGHT, 2);
}

#[test]
fn bug_schemes_conserve_norm_and_energy_per_step() {
    let p = schrodinger_problem(16).unwrap();
    let y0 = p.initial_state().with_rank(4).unwrap();
    let st = untruncated(TIGHT, 16);
    for kind in [
        IntegratorKind::BugAugmented,
        IntegratorKind::MidpointBug4r,
        IntegratorKind::MidpointBug3r,
    ] {
        let y1 = step(kind, &p, &y0, 0.0, 0.1, &st).unwrap().state;
        for q in p.conserved() {
            let drift = (q.evaluate(&y1) - q.evaluate(&y0)).abs();
            assert!(drift <= 1e-8, "{kind} {}: {drift}", q.name());
        }
    }
}

fn dense_reference(p: &MatrixOdeProblem<f64>, t: f64) -> Dense<f64> {
    solve_dense(p, &p.initial_state().assemble(), 0.0, t, &TIGHT).unwrap().value
}

#[test]
fn full_rank_bug_matches_dense_solution() {
    let opts = RandomLinearOptions { symmetric: true, source: true };
    let p = random_linear_problem(6, 6, 5, opts).unwrap();
    let reference = dense_reference(&p, 0.2);
    for kind in [IntegratorKind::BugAugmented, IntegratorKind::BugFixed] {
        let y = step(kind, &p, p.initial_state(), 0.0, 0.2, &settings(SubstepSolver::ExactAffine, 6))
            .unwrap()
            .state;
        let e = frobenius_error(&y, &reference).unwrap() / reference.norm();
        assert!(e <= 1e-9, "{kind}: {e}");
    }
}

#[test]
fn full_rank_mplr_is_classical_midpoint_rule() {
    let opts = RandomLinearOptions { symmetric: false, source: true };
    let p = random_linear_problem(6, 6, 2, opts).unwrap();
    let h = 0.05;
    let y0 = p.initial_state().assemble();
    let mid = &y0 + p.rhs(0.0, &y0).scale(0.5 * h);
    let expected = &y0 + p.rhs(0.5 * h, &mid).scale(h);
    let y = step(IntegratorKind::Mplr, &p, p.initial_state(), 0.0, h, &settings(TIGHT, 6)).unwrap();
    assert!(frobenius_error(&y.state, &expected).unwrap() <= 1e-12 * expected.norm());
}

#[test]
fn fixed_rank_and_augmented_bug_agree_to_second_order_locally() {
    let p = heat_problem(32).unwrap();
    // Start on the exact trajectory, where the normal component is small.
    let y0 = LowRankState::from_dense(&p.exact_solution(0.5).unwrap(), TruncationPolicy::FixedRank(10)).unwrap();
    let st = settings(SubstepSolver::ExactAffine, 10);
    let gap = |h: f64| {
        let a = step(IntegratorKind::BugFixed, &p, &y0, 0.5, h, &st).unwrap().state.assemble();
        let b = step(IntegratorKind::BugAugmented, &p, &y0, 0.5, h, &st).unwrap().state.assemble();
        (a - b).norm()
    };
    let (g1, g2) = (gap(1e-2), gap(5e-3));
    assert!(g2 <= g1 / 3.0 || g2 < 1e-12, "{g1} {g2}");
}

#[test]
fn midpoint_local_error_is_third_order_on_tangential_problem() {
    let p = synthetic_tangential_problem(20, 20, 3, 4).unwrap();
    let st = settings(TIGHT, 3);
    for kind in [IntegratorKind::MidpointBug4r, IntegratorKind::MidpointBug3r] {
        let err = |h: f64| {
            let y = step(kind, &p, p.initial_state(), 0.0, h, &st).unwrap().state;
            frobenius_error(&y, &p.exact_solution(h).unwrap()).unwrap()
        };
        let slope = (err(1e-2) / err(1e-3)).log10();
        assert!((2.7..=3.3).contains(&slope), "{kind}: {slope}");
    }
}

#[test]
fn psi_divergence_is_flagged() {
    // A' = 30 A grows by e^30 over [0, 1].
    let p = zero_problem::<f64>(6, 6, 2, 1).unwrap();
    let growth = LinearStructure::new(
        6,
        6,
        vec![LinearTerm { coeff: 30.0, left: None, right: None }],
        None,
    )
    .unwrap();
    let q = MatrixOdeProblem::new("growth", Rhs::Linear(growth), p.initial_state().clone());
    for kind in [IntegratorKind::PsiLie, IntegratorKind::PsiStrang, IntegratorKind::MidpointBug4r] {
        let failure = evolve(&q, q.initial_state(), 0.0, 1.0, 0.1, kind, &settings(SubstepSolver::ExactAffine, 2))
            .unwrap_err();
        assert!(matches!(failure.error, Error::Diverged { .. }), "{kind}: {}", failure.error);
        assert!(!failure.partial.unwrap().steps.is_empty());
    }
}

#[test]
fn psi_completes_on_heat_problem() {
    let p = heat_problem(32).unwrap();
    let y0 = p.initial_state().with_rank(6).unwrap();
    let exact = p.exact_solution(0.2).unwrap();
    for kind in [IntegratorKind::PsiLie, IntegratorKind::PsiStrang] {
        let out = evolve(&p, &y0, 0.0, 0.2, 1e-2, kind, &settings(SubstepSolver::ExactAffine, 6)).unwrap();
        assert!(frobenius_error(out.final_state(), &exact).unwrap() < 1e-2 * exact.norm());
    }
}

#[test]
fn psi_is_accurate_on_non_stiff_problem() {
    let p = schrodinger_problem(16).unwrap();
    let y0 = p.initial_state().with_rank(4).unwrap();
    let reference = reference_solution(&p, 0.5, 1e-12, None).unwrap();
    for kind in [IntegratorKind::PsiLie, IntegratorKind::PsiStrang] {
        let out = evolve(&p, &y0, 0.0, 0.5, 0.05, kind, &settings(TIGHT, 4)).unwrap();
        let e = frobenius_error(out.final_state(), &reference).unwrap();
        assert!(e <= 1e-3, "{kind}: {e}");
    }
}

#[test]
fn schrodinger_forward_backward_returns_to_start() {
    let p = schrodinger_problem(16).unwrap();
    let y0 = p.initial_state().with_rank(4).unwrap();
    let back = p.reversed();
    let st = settings(TIGHT, 4);
    let h = 1e-3;
    let one_step = {
        let y1 = step(IntegratorKind::MidpointBug4r, &p, &y0, 0.0, h, &st).unwrap().state;
        let reference = reference_solution(&p, h, 1e-13, None).unwrap();
        frobenius_error(&y1, &reference).unwrap()
    };
    let fwd = evolve(&p, &y0, 0.0, 10.0 * h, h, IntegratorKind::MidpointBug4r, &st).unwrap();
    let bwd = evolve(&back, fwd.final_state(), 0.0, 10.0 * h, h, IntegratorKind::MidpointBug4r, &st).unwrap();
    let e = frobenius_error(bwd.final_state(), &y0.assemble()).unwrap();
    assert!(e <= 100.0 * one_step.max(1e-12), "{e} vs one step {one_step}");
}

#[test]
fn one_step_evolution_equals_step() {
    let p = heat_problem(16).unwrap();
    let y0 = p.initial_state().with_rank(4).unwrap();
    let st = settings(SubstepSolver::ExactAffine, 4);
    for kind in IntegratorKind::ALL {
        if matches!(kind, IntegratorKind::PsiLie | IntegratorKind::PsiStrang | IntegratorKind::Mplr) {
            continue;
        }
        let single = step(kind, &p, &y0, 0.0, 1e-3, &st).unwrap().state.assemble();
        let traj = evolve(&p, &y0, 0.0, 1e-3, 1e-3, kind, &st).unwrap();
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.final_state().assemble(), single, "{kind}");
    }
}

#[test]
fn step_times_shorten_the_last_step() {
    assert_eq!(step_times(0.0, 1.0, 0.25).unwrap(), vec![0.25, 0.5, 0.75, 1.0]);
    let t = step_times(0.0, 1.0, 0.3).unwrap();
    assert_eq!(t.len(), 4);
    assert_eq!(*t.last().unwrap(), 1.0);
    assert_eq!(step_times(0.0, 1.0, 0.1).unwrap().len(), 10);
    assert!(step_times(1.0, 1.0, 0.1).is_err());
    assert!(step_times(0.0, 1.0, 0.0).is_err());
}

#[test]
fn evolution_reports_progress_and_failures() {
    let p = heat_problem(16).unwrap();
    let y0 = p.initial_state().with_rank(4).unwrap();
    let st = settings(SubstepSolver::ExactAffine, 4);
    let mut seen = Vec::new();
    let summary = evolve_with(&p, &y0, 0.0, 0.1, 0.025, IntegratorKind::MidpointBug4r, &st, |t, _| seen.push(t))
        .unwrap();
    assert_eq!(summary.steps, 4);
    assert_eq!(seen.len(), 4);
    assert!(summary.max_pre_truncation_rank <= 16);

    let bad = settings(SubstepSolver::ExactAffine, 40);
    let failure = evolve(&p, &y0, 0.0, 0.1, 0.025, IntegratorKind::BugAugmented, &bad).unwrap_err();
    assert!(failure.error.is_usage_error());
    assert_eq!(failure.step_index, 0);

    let q = schrodinger_problem(8).unwrap();
    let failure = evolve(&q, q.initial_state(), 0.0, 0.1, 0.05, IntegratorKind::BugAugmented, &settings(SubstepSolver::ExactAffine, 1))
        .unwrap_err();
    assert!(matches!(failure.error, Error::NotAffine(_)));
}

#[test]
fn heat_midpoint_error_drops_fourfold_when_halving_h() {
    let p = heat_problem(128).unwrap();
    let st = settings(SubstepSolver::ExactAffine, 10);
    let exact = p.exact_solution(1.0).unwrap();
    let err = |h: f64| {
        let out = evolve(&p, p.initial_state(), 0.0, 1.0, h, IntegratorKind::MidpointBug4r, &st).unwrap();
        frobenius_error(out.final_state(), &exact).unwrap()
    };
    let ratio = err(1.0 / 32.0) / err(1.0 / 64.0);
    assert!((3.0..6.5).contains(&ratio), "ratio {ratio}");
}
