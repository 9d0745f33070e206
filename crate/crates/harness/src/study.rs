//! Convergence and conservation studies over an (integrator, rank, h) grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bug_dlra::lowrank::frobenius_error;
use bug_dlra::problems::{
    heat_grid_spacing, heat_problem, schrodinger_problem, synthetic_tangential_problem,
    zero_problem,
};
use bug_dlra::reference::reference_solution;
use bug_dlra::{
    evolve_with, Complex64, Dense, IntegratorKind, LowRankState, MatrixOdeProblem, Scalar,
    StepSettings,
};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::config::{ConfigError, ErrorMetric, Plan, ProblemName};
use crate::slope::{fit_slope, SlopeFit};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("reference solution failed: {0}")]
    Reference(bug_dlra::Error),
    #[error("{0}")]
    Io(String),
}

fn kind_name<S: Serializer>(kind: &IntegratorKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(kind.name())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the thread pool decide.
    pub jobs: usize,
    /// Directory for cached dense reference solutions.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRecord {
    #[serde(serialize_with = "kind_name")]
    pub integrator: IntegratorKind,
    pub rank: usize,
    pub h: f64,
    pub error: Option<f64>,
    pub slope: Option<f64>,
    pub norm_drift: Option<f64>,
    pub energy_drift: Option<f64>,
    pub wall_ms: Option<f64>,
    pub rhs_evals: Option<usize>,
    pub final_rank: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    #[serde(serialize_with = "kind_name")]
    pub integrator: IntegratorKind,
    pub rank: usize,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

/// `|Q(Y_n) - Q(Y_0)|` after the step ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftSample {
    #[serde(serialize_with = "kind_name")]
    pub integrator: IntegratorKind,
    pub rank: usize,
    pub h: f64,
    pub t: f64,
    pub norm_drift: Option<f64>,
    pub energy_drift: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub plan: Plan,
    pub records: Vec<StudyRecord>,
    pub fits: Vec<SeriesFit>,
    pub drift: Vec<DriftSample>,
    /// `||A_ref||_F`, the normalization of relative errors.
    pub reference_norm: Option<f64>,
    pub problem_info: BTreeMap<String, serde_json::Value>,
}

impl StudyOutput {
    pub fn failures(&self) -> impl Iterator<Item = &StudyRecord> {
        self.records.iter().filter(|r| r.failure.is_some())
    }

    pub fn fit(&self, integrator: IntegratorKind, rank: usize) -> Option<&SeriesFit> {
        self.fits
            .iter()
            .find(|f| f.integrator == integrator && f.rank == rank)
    }

    pub fn record(&self, integrator: IntegratorKind, rank: usize, h: f64) -> Option<&StudyRecord> {
        self.records
            .iter()
            .find(|r| r.integrator == integrator && r.rank == rank && r.h == h)
    }
}

enum AnyProblem {
    Real(MatrixOdeProblem<f64>),
    Complex(MatrixOdeProblem<Complex64>),
}

fn build_problem(plan: &Plan) -> Result<AnyProblem, ConfigError> {
    let cfg = &plan.config;
    let n = cfg.size;
    let invalid = |e: bug_dlra::Error| ConfigError::Invalid(e.to_string());
    Ok(match cfg.problem {
        ProblemName::Heat => AnyProblem::Real(heat_problem(n).map_err(invalid)?),
        ProblemName::Schrodinger => AnyProblem::Complex(schrodinger_problem(n).map_err(invalid)?),
        ProblemName::Synthetic => AnyProblem::Real(
            synthetic_tangential_problem(n, n, plan.problem_rank(), cfg.seed).map_err(invalid)?,
        ),
        ProblemName::Zero => {
            AnyProblem::Real(zero_problem(n, n, plan.problem_rank(), cfg.seed).map_err(invalid)?)
        }
    })
}

fn problem_info(plan: &Plan) -> BTreeMap<String, serde_json::Value> {
    let cfg = &plan.config;
    let mut info = BTreeMap::new();
    info.insert("name".into(), cfg.problem.name().into());
    info.insert("size".into(), cfg.size.into());
    info.insert("substep_solver".into(), plan.solver.to_string().into());
    match cfg.problem {
        ProblemName::Heat => {
            info.insert("grid".into(), "interior nodes of [-pi, pi]".into());
            info.insert("dx".into(), heat_grid_spacing(cfg.size).into());
        }
        ProblemName::Schrodinger => {
            info.insert("grid".into(), "x_j = 2 pi j / N, j = -N/2..N/2-1".into());
            info.insert("reference_tol".into(), cfg.reference_tol.into());
        }
        ProblemName::Synthetic | ProblemName::Zero => {
            info.insert("problem_rank".into(), plan.problem_rank().into());
            info.insert("seed".into(), cfg.seed.into());
        }
    }
    info
}

/// Start state of a run: the problem's initial value padded up to rank `r`.
/// Integrators that truncate keep a larger initial rank and cut it after the
/// first step; fixed-rank schemes start from the best rank-`r` version.
pub fn initial_state<T: Scalar>(
    kind: IntegratorKind,
    problem: &MatrixOdeProblem<T>,
    rank: usize,
) -> bug_dlra::Result<LowRankState<T>> {
    let y0 = problem.initial_state();
    if y0.rank() < rank || !kind.truncates() {
        y0.with_rank(rank)
    } else {
        Ok(y0.clone())
    }
}

struct RunResult {
    record: StudyRecord,
    drift: Vec<DriftSample>,
}

fn run_one<T: Scalar>(
    plan: &Plan,
    problem: &MatrixOdeProblem<T>,
    reference: Option<&Dense<T>>,
    (kind, rank, h): (IntegratorKind, usize, f64),
    keep_drift: bool,
) -> RunResult {
    let cfg = &plan.config;
    let mut record = StudyRecord {
        integrator: kind,
        rank,
        h,
        error: None,
        slope: None,
        norm_drift: None,
        energy_drift: None,
        wall_ms: None,
        rhs_evals: None,
        final_rank: None,
        failure: None,
    };
    let mut drift = Vec::new();
    let y0 = match initial_state(kind, problem, rank) {
        Ok(y) => y,
        Err(e) => {
            record.failure = Some(e.to_string());
            return RunResult { record, drift };
        }
    };
    let settings = StepSettings {
        early_truncation: cfg.early_truncation,
        ..StepSettings::new(plan.solver, plan.policy(rank, h))
    };
    let conserved = problem.conserved();
    let q0: Vec<f64> = conserved.iter().map(|q| q.evaluate(&y0)).collect();
    let slot = |name: &str| conserved.iter().position(|q| q.name() == name);
    let (norm_slot, energy_slot) = (slot("norm"), slot("energy"));
    let mut max_drift = vec![0.0f64; conserved.len()];

    let start = Instant::now();
    let outcome = evolve_with(problem, &y0, problem.t0(), problem.t0() + cfg.final_time, h, kind, &settings, |t, step| {
        let values: Vec<f64> = conserved
            .iter()
            .zip(&q0)
            .map(|(q, v0)| (q.evaluate(&step.state) - v0).abs())
            .collect();
        for (m, v) in max_drift.iter_mut().zip(&values) {
            *m = m.max(*v);
        }
        if keep_drift {
            drift.push(DriftSample {
                integrator: kind,
                rank,
                h,
                t,
                norm_drift: norm_slot.map(|i| values[i]),
                energy_drift: energy_slot.map(|i| values[i]),
            });
        }
    });
    let elapsed = start.elapsed();
    match outcome {
        Ok(summary) => {
            record.rhs_evals = Some(summary.rhs_evals);
            record.final_rank = Some(summary.final_state.rank());
            record.norm_drift = norm_slot.map(|i| max_drift[i]);
            record.energy_drift = energy_slot.map(|i| max_drift[i]);
            if cfg.record_wall_time {
                record.wall_ms = Some(elapsed.as_secs_f64() * 1e3);
            }
            if let Some(a_ref) = reference {
                match frobenius_error(&summary.final_state, a_ref) {
                    Ok(e) => {
                        record.error = Some(match cfg.error_metric {
                            ErrorMetric::Absolute => e,
                            ErrorMetric::Relative => e / a_ref.norm(),
                        })
                    }
                    Err(e) => record.failure = Some(e.to_string()),
                }
            }
        }
        Err(failure) => record.failure = Some(failure.to_string()),
    }
    RunResult { record, drift }
}

fn cache_path(plan: &Plan, dir: &Path) -> PathBuf {
    let cfg = &plan.config;
    dir.join(format!(
        "{}-n{}-t{}-tol{:e}.ref",
        cfg.problem.name(),
        cfg.size,
        cfg.final_time,
        cfg.reference_tol
    ))
}

fn run_grid<T: Scalar>(
    plan: &Plan,
    problem: &MatrixOdeProblem<T>,
    options: &RunOptions,
    with_error: bool,
    keep_drift: bool,
) -> Result<(Vec<RunResult>, Option<f64>), StudyError> {
    let cfg = &plan.config;
    let reference = if with_error && !plan.integrators.is_empty() {
        let cache = options.cache_dir.as_ref().map(|d| cache_path(plan, d));
        let t_end = problem.t0() + cfg.final_time;
        Some(
            reference_solution(problem, t_end, cfg.reference_tol, cache.as_deref())
                .map_err(StudyError::Reference)?,
        )
    } else {
        None
    };
    let mut grid = Vec::new();
    for &kind in &plan.integrators {
        for &rank in &cfg.ranks {
            for &h in &cfg.stepsizes {
                grid.push((kind, rank, h));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| StudyError::Io(e.to_string()))?;
    let mut results: Vec<RunResult> = pool.install(|| {
        grid.par_iter()
            .map(|&point| run_one(plan, problem, reference.as_ref(), point, keep_drift))
            .collect()
    });
    results.sort_by(|a, b| {
        let (x, y) = (&a.record, &b.record);
        (x.integrator, x.rank)
            .cmp(&(y.integrator, y.rank))
            .then(x.h.total_cmp(&y.h))
    });
    Ok((results, reference.map(|a| a.norm())))
}

fn assemble(plan: Plan, results: Vec<RunResult>, reference_norm: Option<f64>) -> StudyOutput {
    let mut records: Vec<StudyRecord> = Vec::with_capacity(results.len());
    let mut drift = Vec::new();
    for r in results {
        records.push(r.record);
        drift.extend(r.drift);
    }
    let mut fits = Vec::new();
    let mut series: BTreeMap<(IntegratorKind, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &records {
        let entry = series.entry((r.integrator, r.rank)).or_default();
        if let Some(e) = r.error {
            entry.push((r.h, e));
        }
    }
    for ((integrator, rank), points) in series {
        let fit = fit_slope(&points);
        for r in records.iter_mut().filter(|r| r.integrator == integrator && r.rank == rank) {
            r.slope = fit.slope;
        }
        fits.push(SeriesFit { integrator, rank, fit });
    }
    let problem_info = problem_info(&plan);
    StudyOutput {
        plan,
        records,
        fits,
        drift,
        reference_norm,
        problem_info,
    }
}

fn run(plan: &Plan, options: &RunOptions, with_error: bool, keep_drift: bool) -> Result<StudyOutput, StudyError> {
    let (results, norm) = match build_problem(plan)? {
        AnyProblem::Real(p) => run_grid(plan, &p, options, with_error, keep_drift)?,
        AnyProblem::Complex(p) => run_grid(plan, &p, options, with_error, keep_drift)?,
    };
    Ok(assemble(plan.clone(), results, norm))
}

/// Error against the reference at the final time for every grid point, with
/// per-series slope fits.
pub fn run_convergence_study(plan: &Plan, options: &RunOptions) -> Result<StudyOutput, StudyError> {
    run(plan, options, true, false)
}

/// Per-step drift of the problem's conserved quantities.
pub fn run_conservation_study(plan: &Plan, options: &RunOptions) -> Result<StudyOutput, StudyError> {
    let has_conserved = match build_problem(plan)? {
        AnyProblem::Real(p) => !p.conserved().is_empty(),
        AnyProblem::Complex(p) => !p.conserved().is_empty(),
    };
    if !has_conserved {
        return Err(ConfigError::Invalid(format!(
            "problem {} declares no conserved quantities",
            plan.config.problem
        ))
        .into());
    }
    run(plan, options, false, true)
}
