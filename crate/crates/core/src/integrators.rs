//! One-step maps of the BUG family, the projector-splitting and projected
//! midpoint baselines, and a fixed-step evolution driver.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{augment_basis, orth, orth_span, qr};
use crate::lowrank::{
    normal_component_norm, truncate, LowRankState, NormalComponentDiagnostic, TruncationPolicy,
};
use crate::problem::MatrixOdeProblem;
use crate::scalar::{Dense, Scalar};
use crate::substep::{solve_k, solve_l, solve_s, solve_s_backward, SubstepSolver};

/// Norm growth within one step (or over a trajectory) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntegratorKind {
    BugFixed,
    BugAugmented,
    MidpointBug4r,
    MidpointBug3r,
    TrapezoidalBug,
    PsiLie,
    PsiStrang,
    Mplr,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 8] = [
        IntegratorKind::BugFixed,
        IntegratorKind::BugAugmented,
        IntegratorKind::MidpointBug4r,
        IntegratorKind::MidpointBug3r,
        IntegratorKind::TrapezoidalBug,
        IntegratorKind::PsiLie,
        IntegratorKind::PsiStrang,
        IntegratorKind::Mplr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::BugFixed => "bug-fixed",
            IntegratorKind::BugAugmented => "bug-augmented",
            IntegratorKind::MidpointBug4r => "midpoint-bug-4r",
            IntegratorKind::MidpointBug3r => "midpoint-bug-3r",
            IntegratorKind::TrapezoidalBug => "trapezoidal-bug",
            IntegratorKind::PsiLie => "psi-lie",
            IntegratorKind::PsiStrang => "psi-strang",
            IntegratorKind::Mplr => "mplr",
        }
    }

    /// Largest possible rank before truncation, as a multiple of the input rank.
    pub fn rank_multiplier(self) -> usize {
        match self {
            IntegratorKind::BugFixed | IntegratorKind::PsiLie | IntegratorKind::PsiStrang => 1,
            IntegratorKind::BugAugmented => 2,
            IntegratorKind::MidpointBug3r | IntegratorKind::Mplr => 3,
            IntegratorKind::MidpointBug4r | IntegratorKind::TrapezoidalBug => 4,
        }
    }

    /// Whether the step ends with a truncation governed by the policy.
    pub fn truncates(self) -> bool {
        self.rank_multiplier() > 1
    }
}

impl fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntegratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntegratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown integrator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub solver: SubstepSolver,
    pub policy: TruncationPolicy,
    /// Drop augmentation directions with singular values below this
    /// threshold while building the enlarged bases.
    pub early_truncation: Option<f64>,
    /// Measure `||F(t0, Y0) - P(Y0) F(t0, Y0)||_F`; costs one dense evaluation.
    pub record_diagnostics: bool,
}

impl StepSettings {
    pub fn new(solver: SubstepSolver, policy: TruncationPolicy) -> Self {
        Self {
            solver,
            policy,
            early_truncation: None,
            record_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult<T: Scalar> {
    pub state: LowRankState<T>,
    pub pre_truncation_rank: usize,
    pub diagnostics: Option<NormalComponentDiagnostic>,
    /// Right-hand-side evaluations, counting reduced substep evaluations
    /// and factored products alike.
    pub rhs_evals: usize,
}

/// Enlarged basis and Galerkin data of a BUG-type step, before truncation.
#[derive(Debug, Clone)]
pub struct AugmentedStep<T: Scalar> {
    pub u: Dense<T>,
    pub v: Dense<T>,
    /// Galerkin initial value `(U^* U0) S0 (V^* V0)^*`.
    pub s_start: Dense<T>,
    pub s_end: Dense<T>,
    pub rhs_evals: usize,
}

impl<T: Scalar> AugmentedStep<T> {
    pub fn rank(&self) -> usize {
        self.u.ncols().max(self.v.ncols())
    }

    pub fn assemble_start(&self) -> Dense<T> {
        &self.u * &self.s_start * self.v.adjoint()
    }

    pub fn assemble_end(&self) -> Dense<T> {
        &self.u * &self.s_end * self.v.adjoint()
    }
}

fn check_step(problem: &MatrixOdeProblem<impl Scalar>, y0: &LowRankState<impl Scalar>, h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    if (y0.rows(), y0.cols()) != problem.dims() {
        return Err(Error::invalid(format!(
            "state is {}x{} but the problem is {}x{}",
            y0.rows(),
            y0.cols(),
            problem.dims().0,
            problem.dims().1
        )));
    }
    Ok(())
}

/// Orthonormal basis of `range(base) + range(extra)` containing `base`.
fn enlarge<T: Scalar>(base: &Dense<T>, extra: &[&Dense<T>], early: Option<f64>) -> Result<Dense<T>> {
    match early {
        None => {
            let mut blocks = vec![base];
            blocks.extend_from_slice(extra);
            Ok(orth_span(&blocks))
        }
        Some(tol) => {
            let mut blocks = Vec::with_capacity(extra.len());
            blocks.extend_from_slice(extra);
            augment_basis(base, &crate::linalg::hcat(&blocks), tol)
        }
    }
}

/// Galerkin step over `[t0, t1]` in the bases `(u, v)` from `(u^* U0) S0 (v^* V0)^*`.
fn galerkin<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    u: Dense<T>,
    v: Dense<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
    evals: usize,
) -> Result<AugmentedStep<T>> {
    let m = u.adjoint() * y0.u();
    let n = v.adjoint() * y0.v();
    let s_start = m * y0.s() * n.adjoint();
    let sol = solve_s(problem, &u, &v, &s_start, t0, t1, solver)?;
    Ok(AugmentedStep {
        u,
        v,
        s_start,
        s_end: sol.value,
        rhs_evals: evals + sol.rhs_evals,
    })
}

fn k_and_l<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<(Dense<T>, Dense<T>, usize)> {
    let k = solve_k(problem, y0.v(), &(y0.u() * y0.s()), t0, t1, solver)?;
    let l = solve_l(problem, y0.u(), &(y0.v() * y0.s().adjoint()), t0, t1, solver)?;
    Ok((k.value, l.value, k.rhs_evals + l.rhs_evals))
}

/// Augmented BUG step without the final truncation (rank `<= 2r`).
pub fn bug_augmented_untruncated<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<AugmentedStep<T>> {
    check_step(problem, y0, h)?;
    let t1 = t0 + h;
    let (k1, l1, evals) = k_and_l(problem, y0, t0, t1, &settings.solver)?;
    let u = enlarge(y0.u(), &[&k1], settings.early_truncation)?;
    let v = enlarge(y0.v(), &[&l1], settings.early_truncation)?;
    galerkin(problem, y0, u, v, t0, t1, &settings.solver, evals)
}

fn diagnostics<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    settings: &StepSettings,
) -> Result<Option<NormalComponentDiagnostic>> {
    if !settings.record_diagnostics {
        return Ok(None);
    }
    let f = problem.rhs(t0, &y0.assemble());
    Ok(Some(NormalComponentDiagnostic {
        epsilon_estimate: normal_component_norm(y0, &f)?,
        rank_at_measurement: y0.rank(),
        time: t0,
    }))
}

fn finish<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    settings: &StepSettings,
    step: AugmentedStep<T>,
) -> Result<StepResult<T>> {
    let state = truncate(&step.u, &step.s_end, &step.v, settings.policy)?;
    Ok(StepResult {
        pre_truncation_rank: step.rank(),
        diagnostics: diagnostics(problem, y0, t0, settings)?,
        rhs_evals: step.rhs_evals,
        state,
    })
}

pub fn bug_augmented_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    let step = bug_augmented_untruncated(problem, y0, t0, h, settings)?;
    finish(problem, y0, t0, settings, step)
}

/// Fixed-rank BUG: the new bases span `K(t1)` and `L(t1)` only.
pub fn bug_fixed_rank_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    check_step(problem, y0, h)?;
    let t1 = t0 + h;
    let (k1, l1, evals) = k_and_l(problem, y0, t0, t1, &settings.solver)?;
    let step = galerkin(problem, y0, orth(&k1)?, orth(&l1)?, t0, t1, &settings.solver, evals)?;
    let state = LowRankState::new(step.u, step.s_end, step.v)?;
    Ok(StepResult {
        pre_truncation_rank: state.rank(),
        diagnostics: diagnostics(problem, y0, t0, settings)?,
        rhs_evals: step.rhs_evals,
        state,
    })
}

/// Bases and Galerkin data of the 4r midpoint step, before truncation.
pub fn midpoint_bug_4r_untruncated<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<(AugmentedStep<T>, AugmentedStep<T>)> {
    let half = bug_augmented_untruncated(problem, y0, t0, 0.5 * h, settings)?;
    let t_half = t0 + 0.5 * h;
    let fv = problem
        .rhs_times(t_half, &half.u, &half.s_end, &half.v, &half.v)
        .scale(h);
    let fu = problem
        .rhs_adjoint_times(t_half, &half.u, &half.s_end, &half.v, &half.u)
        .scale(h);
    let u = enlarge(&half.u, &[&fv], settings.early_truncation)?;
    let v = enlarge(&half.v, &[&fu], settings.early_truncation)?;
    let full = galerkin(problem, y0, u, v, t0, t0 + h, &settings.solver, half.rhs_evals + 2)?;
    Ok((half, full))
}

pub fn midpoint_bug_4r_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    let (_, full) = midpoint_bug_4r_untruncated(problem, y0, t0, h, settings)?;
    finish(problem, y0, t0, settings, full)
}

/// Bases and Galerkin data of the 3r midpoint step, before truncation,
/// together with the fixed-rank half-step state.
pub fn midpoint_bug_3r_untruncated<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<(LowRankState<T>, AugmentedStep<T>)> {
    let half = bug_fixed_rank_step(problem, y0, t0, 0.5 * h, settings)?;
    let y_half = half.state;
    let t_half = t0 + 0.5 * h;
    let (uh, sh, vh) = (y_half.u(), y_half.s(), y_half.v());
    let fv = problem.rhs_times(t_half, uh, sh, vh, vh).scale(h);
    let fu = problem.rhs_adjoint_times(t_half, uh, sh, vh, uh).scale(h);
    let u = enlarge(y0.u(), &[uh, &fv], settings.early_truncation)?;
    let v = enlarge(y0.v(), &[vh, &fu], settings.early_truncation)?;
    let full = galerkin(problem, y0, u, v, t0, t0 + h, &settings.solver, half.rhs_evals + 2)?;
    Ok((y_half, full))
}

pub fn midpoint_bug_3r_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    let (_, full) = midpoint_bug_3r_untruncated(problem, y0, t0, h, settings)?;
    finish(problem, y0, t0, settings, full)
}

/// Trapezoidal BUG data before truncation: the predictor at `t1` (forward
/// Euler K/L substeps, regular S-step) and the final Galerkin step.
pub fn trapezoidal_bug_untruncated<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<(AugmentedStep<T>, AugmentedStep<T>)> {
    check_step(problem, y0, h)?;
    let t1 = t0 + h;
    let (u0, s0, v0) = (y0.u(), y0.s(), y0.v());
    let fv0 = problem.rhs_times(t0, u0, s0, v0, v0).scale(h);
    let fu0 = problem.rhs_adjoint_times(t0, u0, s0, v0, u0).scale(h);
    let k1 = u0 * s0 + &fv0;
    let l1 = v0 * s0.adjoint() + &fu0;
    let u_pred = enlarge(u0, &[&k1], settings.early_truncation)?;
    let v_pred = enlarge(v0, &[&l1], settings.early_truncation)?;
    let predictor = galerkin(problem, y0, u_pred, v_pred, t0, t1, &settings.solver, 2)?;

    let (up, sp, vp) = (&predictor.u, &predictor.s_end, &predictor.v);
    let fv1 = problem.rhs_times(t1, up, sp, vp, vp).scale(h);
    let fu1 = problem.rhs_adjoint_times(t1, up, sp, vp, up).scale(h);
    let u = enlarge(u0, &[&fv0, &fv1], settings.early_truncation)?;
    let v = enlarge(v0, &[&fu0, &fu1], settings.early_truncation)?;
    let evals = predictor.rhs_evals + 2;
    let full = galerkin(problem, y0, u, v, t0, t1, &settings.solver, evals)?;
    Ok((predictor, full))
}

pub fn trapezoidal_bug_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    let (_, full) = trapezoidal_bug_untruncated(problem, y0, t0, h, settings)?;
    finish(problem, y0, t0, settings, full)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplittingOrder {
    Lie,
    Strang,
}

/// K, backward S, L over `[t0, t1]`.
fn ksl<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    (u0, s0, v0): (&Dense<T>, &Dense<T>, &Dense<T>),
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<(Dense<T>, Dense<T>, Dense<T>, usize)> {
    let k = solve_k(problem, v0, &(u0 * s0), t0, t1, solver)?;
    let (u1, s_hat) = qr(&k.value);
    let s = solve_s_backward(problem, &u1, v0, &s_hat, t0, t1, solver)?;
    let l = solve_l(problem, &u1, &(v0 * s.value.adjoint()), t0, t1, solver)?;
    let (v1, r) = qr(&l.value);
    Ok((u1, r.adjoint(), v1, k.rhs_evals + s.rhs_evals + l.rhs_evals))
}

/// L, backward S, K over `[t0, t1]`: the adjoint of [`ksl`].
fn lsk<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    (u0, s0, v0): (&Dense<T>, &Dense<T>, &Dense<T>),
    t0: f64,
    t1: f64,
    solver: &SubstepSolver,
) -> Result<(Dense<T>, Dense<T>, Dense<T>, usize)> {
    let l = solve_l(problem, u0, &(v0 * s0.adjoint()), t0, t1, solver)?;
    let (v1, r) = qr(&l.value);
    let s = solve_s_backward(problem, u0, &v1, &r.adjoint(), t0, t1, solver)?;
    let k = solve_k(problem, &v1, &(u0 * &s.value), t0, t1, solver)?;
    let (u1, s1) = qr(&k.value);
    Ok((u1, s1, v1, k.rhs_evals + s.rhs_evals + l.rhs_evals))
}

/// Projector-splitting step at fixed rank. Growth of the norm by more than
/// [`DIVERGENCE_FACTOR`] or non-finite factors are reported as
/// [`Error::Diverged`].
pub fn psi_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
    order: SplittingOrder,
) -> Result<StepResult<T>> {
    check_step(problem, y0, h)?;
    let parts = (y0.u(), y0.s(), y0.v());
    let solver = &settings.solver;
    let outcome = match order {
        SplittingOrder::Lie => ksl(problem, parts, t0, t0 + h, solver),
        SplittingOrder::Strang => {
            let t_half = t0 + 0.5 * h;
            ksl(problem, parts, t0, t_half, solver).and_then(|(u, s, v, e1)| {
                lsk(problem, (&u, &s, &v), t_half, t0 + h, solver)
                    .map(|(u, s, v, e2)| (u, s, v, e1 + e2))
            })
        }
    };
    let previous = y0.norm();
    let diverged = |norm: f64| Error::Diverged {
        t: t0 + h,
        norm,
        previous,
    };
    let (u, s, v, evals) = match outcome {
        Ok(parts) => parts,
        Err(Error::NonFinite(_)) | Err(Error::StepSizeUnderflow { .. }) => {
            return Err(diverged(f64::INFINITY))
        }
        Err(e) => return Err(e),
    };
    let norm = s.norm();
    if !norm.is_finite() || norm > DIVERGENCE_FACTOR * previous.max(f64::MIN_POSITIVE) {
        return Err(diverged(norm));
    }
    let state = LowRankState::new(u, s, v)?;
    Ok(StepResult {
        pre_truncation_rank: state.rank(),
        diagnostics: diagnostics(problem, y0, t0, settings)?,
        rhs_evals: evals,
        state,
    })
}

/// Truncation of `[U_1 .. U_k] M [V_1 .. V_k]^*` without forming the product.
fn truncate_blocks<T: Scalar>(
    left: &[&Dense<T>],
    core: &Dense<T>,
    right: &[&Dense<T>],
    policy: TruncationPolicy,
) -> Result<LowRankState<T>> {
    let (ql, rl) = qr(&crate::linalg::hcat(left));
    let (qr_, rr) = qr(&crate::linalg::hcat(right));
    truncate(&ql, &(rl * core * rr.adjoint()), &qr_, policy)
}

/// `Y + tau P(Z) F(t, Z)` in factored form.
///
/// With `a = F V_z`, `b = F^* U_z` and `c = U_z^* a` the tangent vector is
/// `a V_z^* - U_z c V_z^* + U_z b^*`, so the sum is
/// `[U, U_z, a] diag(S, [[-tau c, tau I], [tau I, 0]]) [V, V_z, b]^*`.
fn projected_euler<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y: &LowRankState<T>,
    z: &LowRankState<T>,
    t: f64,
    tau: f64,
    policy: TruncationPolicy,
) -> Result<LowRankState<T>> {
    let (uz, sz, vz) = (z.u(), z.s(), z.v());
    let a = problem.rhs_times(t, uz, sz, vz, vz);
    let b = problem.rhs_adjoint_times(t, uz, sz, vz, uz);
    let c = uz.adjoint() * &a;
    let (r, q) = (y.rank(), z.rank());
    let tau_t = T::from_real(tau);
    let mut core = Dense::<T>::zeros(r + 2 * q, r + 2 * q);
    core.view_mut((0, 0), (r, r)).copy_from(y.s());
    core.view_mut((r, r), (q, q)).copy_from(&c.scale(-tau));
    for i in 0..q {
        core[(r + i, r + q + i)] = tau_t;
        core[(r + q + i, r + i)] = tau_t;
    }
    truncate_blocks(&[y.u(), uz, &a], &core, &[y.v(), vz, &b], policy)
}

/// Projected midpoint rule on the rank-`r` manifold:
/// `Z = T_r(Y0 + h/2 P(Y0) F(t0, Y0))`, `Y1 = T(Y0 + h P(Z) F(t0 + h/2, Z))`.
pub fn mplr_step<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    check_step(problem, y0, h)?;
    let r = y0.rank();
    let z = projected_euler(problem, y0, y0, t0, 0.5 * h, TruncationPolicy::FixedRank(r))?;
    let state = projected_euler(problem, y0, &z, t0 + 0.5 * h, h, settings.policy)?;
    Ok(StepResult {
        pre_truncation_rank: (y0.rank() + 2 * z.rank()).min(y0.rows().min(y0.cols())),
        diagnostics: diagnostics(problem, y0, t0, settings)?,
        rhs_evals: 4,
        state,
    })
}

/// One step of `kind` from `(t0, y0)` with step size `h`.
pub fn step<T: Scalar>(
    kind: IntegratorKind,
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    h: f64,
    settings: &StepSettings,
) -> Result<StepResult<T>> {
    match kind {
        IntegratorKind::BugFixed => bug_fixed_rank_step(problem, y0, t0, h, settings),
        IntegratorKind::BugAugmented => bug_augmented_step(problem, y0, t0, h, settings),
        IntegratorKind::MidpointBug4r => midpoint_bug_4r_step(problem, y0, t0, h, settings),
        IntegratorKind::MidpointBug3r => midpoint_bug_3r_step(problem, y0, t0, h, settings),
        IntegratorKind::TrapezoidalBug => trapezoidal_bug_step(problem, y0, t0, h, settings),
        IntegratorKind::PsiLie => psi_step(problem, y0, t0, h, settings, SplittingOrder::Lie),
        IntegratorKind::PsiStrang => psi_step(problem, y0, t0, h, settings, SplittingOrder::Strang),
        IntegratorKind::Mplr => mplr_step(problem, y0, t0, h, settings),
    }
}

/// Step times `t0 < t_1 < ... < t_n = t_end` with spacing `h`; the last
/// step is shortened when `h` does not divide the interval.
pub fn step_times(t0: f64, t_end: f64, h: f64) -> Result<Vec<f64>> {
    if !(t_end > t0) || !(h > 0.0) || !t_end.is_finite() || !h.is_finite() {
        return Err(Error::invalid(format!(
            "need t_end > t0 and h > 0, got t0={t0}, t_end={t_end}, h={h}"
        )));
    }
    let n = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
    Ok((1..=n)
        .map(|k| if k == n { t_end } else { t0 + k as f64 * h })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub t0: f64,
    pub initial: LowRankState<T>,
    pub times: Vec<f64>,
    pub steps: Vec<StepResult<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_state(&self) -> &LowRankState<T> {
        self.steps.last().map_or(&self.initial, |s| &s.state)
    }
}

/// Summary of an evolution whose steps were streamed to an observer.
#[derive(Debug, Clone)]
pub struct EvolveSummary<T: Scalar> {
    pub final_state: LowRankState<T>,
    pub steps: usize,
    pub rhs_evals: usize,
    pub max_pre_truncation_rank: usize,
}

#[derive(Debug, Clone)]
pub struct EvolveFailure<T: Scalar> {
    pub error: Error,
    /// Zero-based index of the failing step.
    pub step_index: usize,
    /// Start time of the failing step.
    pub time: f64,
    pub last_state: LowRankState<T>,
    /// Completed steps, when collected by [`evolve`].
    pub partial: Option<Trajectory<T>>,
}

impl<T: Scalar> fmt::Display for EvolveFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} at t = {} failed: {}", self.step_index, self.time, self.error)
    }
}

impl<T: Scalar> std::error::Error for EvolveFailure<T> {}

/// Evolve from `(t0, y0)` to `t_end`, passing every completed step to
/// `observer`. The state is validated after each step, and a norm growth by
/// [`DIVERGENCE_FACTOR`] over the initial norm aborts with [`Error::Diverged`].
#[allow(clippy::too_many_arguments)]
pub fn evolve_with<T, O>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    t_end: f64,
    h: f64,
    kind: IntegratorKind,
    settings: &StepSettings,
    mut observer: O,
) -> Result<EvolveSummary<T>, EvolveFailure<T>>
where
    T: Scalar,
    O: FnMut(f64, &StepResult<T>),
{
    let fail = |error, step_index, time, last_state: &LowRankState<T>| EvolveFailure {
        error,
        step_index,
        time,
        last_state: last_state.clone(),
        partial: None,
    };
    let setup = step_times(t0, t_end, h)
        .and_then(|times| y0.validate().map(|_| times))
        .and_then(|times| {
            settings.solver.validate()?;
            settings.policy.validate(y0.rows(), y0.cols())?;
            Ok(times)
        });
    let times = setup.map_err(|e| fail(e, 0, t0, y0))?;

    let initial_norm = y0.norm();
    let mut state = y0.clone();
    let mut t = t0;
    let mut summary = EvolveSummary {
        final_state: y0.clone(),
        steps: 0,
        rhs_evals: 0,
        max_pre_truncation_rank: 0,
    };
    for (index, &t_next) in times.iter().enumerate() {
        let result = step(kind, problem, &state, t, t_next - t, settings).and_then(|r| {
            r.state.validate().map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    t: t_next,
                    norm: f64::INFINITY,
                    previous: state.norm(),
                },
                other => other,
            })?;
            let norm = r.state.norm();
            if norm > DIVERGENCE_FACTOR * initial_norm.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged {
                    t: t_next,
                    norm,
                    previous: initial_norm,
                });
            }
            Ok(r)
        });
        let result = result.map_err(|e| fail(e, index, t, &state))?;
        observer(t_next, &result);
        summary.steps += 1;
        summary.rhs_evals += result.rhs_evals;
        summary.max_pre_truncation_rank = summary.max_pre_truncation_rank.max(result.pre_truncation_rank);
        state = result.state;
        t = t_next;
    }
    summary.final_state = state;
    Ok(summary)
}

/// [`evolve_with`] collecting every step.
#[allow(clippy::too_many_arguments)]
pub fn evolve<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    y0: &LowRankState<T>,
    t0: f64,
    t_end: f64,
    h: f64,
    kind: IntegratorKind,
    settings: &StepSettings,
) -> Result<Trajectory<T>, EvolveFailure<T>> {
    let mut trajectory = Trajectory {
        t0,
        initial: y0.clone(),
        times: Vec::new(),
        steps: Vec::new(),
    };
    let outcome = evolve_with(problem, y0, t0, t_end, h, kind, settings, |t, r| {
        trajectory.times.push(t);
        trajectory.steps.push(r.clone());
    });
    match outcome {
        Ok(_) => Ok(trajectory),
        Err(mut failure) => {
            failure.partial = Some(trajectory);
            Err(failure)
        }
    }
}
