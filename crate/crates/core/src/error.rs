use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("Sylvester pencil is singular (smallest eigenvalue sum {gap:e})")]
    SingularPencil { gap: f64 },

    #[error("the exact-affine substep solver needs F(t,Y) = aAY + bYB + C with Hermitian A, B; {0}")]
    NotAffine(String),

    #[error("adaptive step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("adaptive integrator exceeded {max_steps} steps before reaching t = {t_end}")]
    TooManySteps { max_steps: usize, t_end: f64 },

    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),

    #[error("low-rank state diverged at t = {t}: norm {norm:e} grew from {previous:e}")]
    Diverged { t: f64, norm: f64, previous: f64 },
}

impl Error {
    /// Errors caused by the caller's inputs rather than by the numerics.
    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::NotAffine(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
