//! Study configuration: a flat TOML table.
//!
//! ```toml
//! problem = "heat"
//! size = 128
//! integrators = ["midpoint-bug-4r", "bug-augmented"]
//! ranks = [2, 4, 6, 8, 10]
//! stepsizes = [0.125, 0.0625]
//! final_time = 1.0
//! truncation = "fixed"        # or "theta" with `theta = 1e-6` (tolerance h * theta)
//! substep_solver = "exact-affine"
//! error_metric = "absolute"
//! output = "heat.csv"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use bug_dlra::{IntegratorKind, SubstepSolver, TruncationPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Heat,
    Schrodinger,
    Synthetic,
    Zero,
}

impl ProblemName {
    pub const ALL: [ProblemName; 4] = [
        ProblemName::Heat,
        ProblemName::Schrodinger,
        ProblemName::Synthetic,
        ProblemName::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemName::Heat => "heat",
            ProblemName::Schrodinger => "schrodinger",
            ProblemName::Synthetic => "synthetic",
            ProblemName::Zero => "zero",
        }
    }

    fn default_solver(self) -> SubstepSolver {
        match self {
            ProblemName::Heat | ProblemName::Zero => SubstepSolver::ExactAffine,
            ProblemName::Schrodinger | ProblemName::Synthetic => SubstepSolver::DEFAULT_RK45,
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Truncate to the study rank after every step.
    #[default]
    Fixed,
    /// Tolerance `h * theta`, capped at the study rank.
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    #[default]
    Absolute,
    Relative,
}

fn default_output() -> String {
    "results.csv".to_string()
}

fn default_reference_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemName,
    pub size: usize,
    #[serde(default)]
    pub integrators: Vec<String>,
    pub ranks: Vec<usize>,
    pub stepsizes: Vec<f64>,
    pub final_time: f64,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub theta: f64,
    /// `exact-affine`, `rk4:<steps>` or `rk45[:rtol[:atol]]`; problem default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substep_solver: Option<String>,
    #[serde(default)]
    pub error_metric: ErrorMetric,
    #[serde(default = "default_output")]
    pub output: String,
    /// Tolerance of the dense reference solve when there is no closed form.
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rank of the synthetic and zero problems (defaults to the largest study rank).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_truncation: Option<f64>,
    /// Wall time makes the CSV non-deterministic, so it is opt-in.
    #[serde(default)]
    pub record_wall_time: bool,
}

/// A checked configuration.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: StudyConfig,
    pub integrators: Vec<IntegratorKind>,
    pub solver: SubstepSolver,
    pub config_hash: String,
}

impl Plan {
    pub fn policy(&self, rank: usize, h: f64) -> TruncationPolicy {
        match self.config.truncation {
            Truncation::Fixed => TruncationPolicy::FixedRank(rank),
            Truncation::Theta => TruncationPolicy::Tolerance {
                tol: h * self.config.theta,
                max_rank: rank,
            },
        }
    }

    pub fn problem_rank(&self) -> usize {
        self.config
            .problem_rank
            .unwrap_or_else(|| self.config.ranks.iter().copied().max().unwrap_or(1))
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<Plan, ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let integrators = self
            .integrators
            .iter()
            .map(|name| {
                name.parse::<IntegratorKind>().map_err(|_| {
                    let valid: Vec<_> = IntegratorKind::ALL.iter().map(|k| k.name()).collect();
                    ConfigError::Invalid(format!(
                        "unknown integrator {name:?}; valid options: {}",
                        valid.join(", ")
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let solver = match &self.substep_solver {
            Some(text) => text
                .parse::<SubstepSolver>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => self.problem.default_solver(),
        };
        if self.size == 0 {
            return invalid("size must be positive".into());
        }
        if self.ranks.is_empty() || self.stepsizes.is_empty() {
            return invalid("ranks and stepsizes must be nonempty".into());
        }
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > self.size) {
            return invalid(format!("rank {r} outside 1..={}", self.size));
        }
        if !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return invalid(format!("final_time must be positive, got {}", self.final_time));
        }
        for &h in &self.stepsizes {
            if !(h > 0.0) || !h.is_finite() {
                return invalid(format!("step size {h} must be positive"));
            }
            let steps = self.final_time / h;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                return invalid(format!(
                    "step size {h} does not divide final_time {}",
                    self.final_time
                ));
            }
        }
        if self.truncation == Truncation::Theta && !(self.theta >= 0.0 && self.theta.is_finite()) {
            return invalid(format!("theta must be >= 0, got {}", self.theta));
        }
        if !(self.reference_tol > 0.0) {
            return invalid("reference_tol must be positive".into());
        }
        if self.output.is_empty() || Path::new(&self.output).file_name().is_none() {
            return invalid(format!("bad output file name {:?}", self.output));
        }
        Ok(Plan {
            config: self.clone(),
            integrators,
            solver,
            config_hash: self.hash(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"
        problem = "heat"
        size = 32
        integrators = ["midpoint-bug-4r", "bug-augmented"]
        ranks = [2, 4]
        stepsizes = [0.125, 0.0625]
        final_time = 1.0
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = StudyConfig::from_toml(HEAT).unwrap();
        let plan = cfg.validate().unwrap();
        assert_eq!(plan.integrators, vec![IntegratorKind::MidpointBug4r, IntegratorKind::BugAugmented]);
        assert_eq!(plan.solver, SubstepSolver::ExactAffine);
        assert_eq!(cfg.error_metric, ErrorMetric::Absolute);
        assert_eq!(plan.policy(4, 0.5), TruncationPolicy::FixedRank(4));
        assert_eq!(plan.config_hash.len(), 16);
    }

    #[test]
    fn hash_tracks_content() {
        let a = StudyConfig::from_toml(HEAT).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 3;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn theta_policy_scales_with_h() {
        let mut cfg = StudyConfig::from_toml(HEAT).unwrap();
        cfg.truncation = Truncation::Theta;
        cfg.theta = 1e-6;
        let plan = cfg.validate().unwrap();
        assert_eq!(
            plan.policy(4, 0.5),
            TruncationPolicy::Tolerance { tol: 0.5e-6, max_rank: 4 }
        );
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            ("integrators = [\"midpoint\"]", "valid options"),
            ("stepsizes = [0.3]", "does not divide"),
            ("ranks = []", "nonempty"),
            ("ranks = [64]", "outside"),
            ("substep_solver = \"euler\"", "substep solver"),
            ("final_time = -1.0", "final_time"),
        ];
        for (patch, needle) in cases {
            let key = patch.split(' ').next().unwrap();
            let text: String = HEAT
                .lines()
                .filter(|l| l.trim().split(' ').next() != Some(key))
                .chain(std::iter::once(patch))
                .collect::<Vec<_>>()
                .join("\n");
            let err = StudyConfig::from_toml(&text).unwrap().validate().unwrap_err();
            assert!(err.to_string().contains(needle), "{patch}: {err}");
        }
    }

    #[test]
    fn unknown_keys_and_problems_fail_to_parse() {
        assert!(matches!(
            StudyConfig::from_toml(&format!("{HEAT}\ncolour = 1")),
            Err(ConfigError::Parse(_))
        ));
        assert!(StudyConfig::from_toml(&HEAT.replace("\"heat\"", "\"vlasov\"")).is_err());
    }
}
