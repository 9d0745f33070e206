//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/config/IO error, 2 when any run failed
//! numerically.

use std::ffi::OsString;
use std::path::PathBuf;

use bug_dlra::IntegratorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, StudyConfig};
use crate::output::write_study;
use crate::study::{run_conservation_study, run_convergence_study, RunOptions, StudyOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bug-harness", version, about = "Convergence and conservation studies for low-rank integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Error at the final time over the integrator x rank x step size grid.
    Convergence(StudyArgs),
    /// Drift of the conserved quantities at every step.
    Conserve(StudyArgs),
    /// One integrator, one rank, one step size.
    SingleRun {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        integrator: IntegratorKind,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        h: f64,
    },
    /// Print the available integrator names.
    ListIntegrators,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// TOML study configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory for cached reference solutions.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum Mode {
    Convergence,
    Conserve,
}

fn load(args: &StudyArgs) -> Result<StudyConfig, ConfigError> {
    let mut cfg = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(mode: Mode, cfg: StudyConfig, args: &StudyArgs) -> i32 {
    let plan = match cfg.validate() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let options = RunOptions {
        jobs: args.jobs,
        cache_dir: args.cache.clone(),
    };
    let result = match mode {
        Mode::Convergence => run_convergence_study(&plan, &options),
        Mode::Conserve => run_conservation_study(&plan, &options),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                crate::study::StudyError::Reference(_) => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            };
        }
    };
    let files = match write_study(&args.out, &out) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot write results to {}: {e}", args.out.display());
            return EXIT_USAGE;
        }
    };
    summarize(&out);
    println!("wrote {}", files.results.display());
    if let Some(d) = &files.drift {
        println!("wrote {}", d.display());
    }
    println!("wrote {}", files.meta.display());
    if out.failures().next().is_some() {
        for r in out.failures() {
            eprintln!(
                "failed: {} rank {} h {}: {}",
                r.integrator,
                r.rank,
                r.h,
                r.failure.as_deref().unwrap_or_default()
            );
        }
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

fn summarize(out: &StudyOutput) {
    for f in &out.fits {
        match f.fit.slope {
            Some(s) => println!(
                "{:<20} rank {:>3}  slope {:6.3}  ({} points)",
                f.integrator.name(),
                f.rank,
                s,
                f.fit.used.len()
            ),
            None => println!("{:<20} rank {:>3}  slope n/a", f.integrator.name(), f.rank),
        }
    }
    for r in &out.records {
        if r.norm_drift.is_some() || r.energy_drift.is_some() {
            println!(
                "{:<20} rank {:>3}  h {:<8}  norm drift {}  energy drift {}",
                r.integrator.name(),
                r.rank,
                r.h,
                r.norm_drift.map(|d| format!("{d:.3e}")).unwrap_or("-".into()),
                r.energy_drift.map(|d| format!("{d:.3e}")).unwrap_or("-".into()),
            );
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::ListIntegrators => {
            for k in IntegratorKind::ALL {
                println!("{}", k.name());
            }
            EXIT_OK
        }
        Command::Convergence(args) => match load(&args) {
            Ok(cfg) => execute(Mode::Convergence, cfg, &args),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Command::Conserve(args) => match load(&args) {
            Ok(cfg) => execute(Mode::Conserve, cfg, &args),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Command::SingleRun {
            study,
            integrator,
            rank,
            h,
        } => match load(&study) {
            Ok(mut cfg) => {
                cfg.integrators = vec![integrator.name().to_string()];
                cfg.ranks = vec![rank];
                cfg.stepsizes = vec![h];
                execute(Mode::Convergence, cfg, &study)
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
    }
}
