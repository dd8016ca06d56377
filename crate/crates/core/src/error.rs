//! Error type shared by all modules.

use core::fmt;

/// Errors reported by ensemble statistics, solvers and stepping engines.
#[derive(Debug, Clone, PartialEq)]
pub enum PosError {
    /// A precondition on the inputs was violated.
    InvalidInput(&'static str),
    /// A non-finite value (NaN or infinity) appeared; carries the offending
    /// flat index when known.
    NonFinite { context: &'static str, index: usize },
    /// The Gram matrix `u = JJ†` is singular or too ill-conditioned to
    /// invert; carries the reciprocal-condition estimate.
    SingularGram { rcond: f64 },
    /// The Newton iteration hit the iteration cap without satisfying the
    /// stopping rule.
    NonConvergence { iterations: usize },
    /// The residual norm increased on consecutive iterations.
    Divergence { iteration: usize },
    /// A diffusion matrix produced a negative diagonal entry.
    InvalidDiffusion { index: usize },
    /// An iterative kernel (SVD sweep, quadrature tail test, ...) failed.
    Numeric(&'static str),
    /// A multi-step integration failed; carries the failing step and cause.
    StepFailed { step: usize, cause: &'static str },
}

impl fmt::Display for PosError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PosError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            PosError::NonFinite { context, index } => {
                write!(f, "non-finite value in {context} at index {index}")
            }
            PosError::SingularGram { rcond } => {
                write!(f, "singular gram matrix (rcond estimate {rcond:e})")
            }
            PosError::NonConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
            PosError::Divergence { iteration } => {
                write!(f, "residual norm diverged at iteration {iteration}")
            }
            PosError::InvalidDiffusion { index } => {
                write!(f, "negative diffusion diagonal at index {index}")
            }
            PosError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            PosError::StepFailed { step, cause } => {
                write!(f, "integration step {step} failed: {cause}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PosError {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, PosError>;
