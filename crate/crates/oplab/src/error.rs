//! Crate-wide error type.
//!
//! Variants split into two broad groups that callers (notably the CLI)
//! treat differently: invalid input/configuration, and numerical
//! non-convergence discovered at run time.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient index beyond what the family can deliver was requested.
    #[error("coefficient index {requested} beyond resolvable range (maximum safe index {max_safe})")]
    BeyondResolution { requested: usize, max_safe: usize },

    /// Family parameters outside their admissible range, malformed tables, etc.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parse failure in a coefficient table or measure file.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// The implicit-shift tridiagonal eigensolver exhausted its sweep budget.
    #[error("eigensolver failed to converge at index {index} after {sweeps} sweeps")]
    EigenNoConvergence { index: usize, sweeps: usize },

    /// Lanczos re-orthogonalization degraded beyond the accepted residual.
    #[error("orthogonality lost at step {step} (residual {residual:.3e}); use a finer discretization")]
    OrthogonalityLost { step: usize, residual: f64 },

    /// The adaptive node-doubling policy hit its cap without stabilizing.
    #[error("quadrature not converged: {context} (node cap {cap})")]
    QuadratureNotConverged { context: String, cap: usize },

    /// An improper-integral evaluation failed to stabilize.
    #[error("integral not converged: {0}")]
    IntegralNotConverged(String),

    /// Density modification with a non-positive factor.
    #[error("non-positive density factor g({x}) = {value} at node index {index}")]
    NonPositiveDensity { index: usize, x: f64, value: f64 },

    /// A declared-bounded test function exceeded its bound.
    #[error("test function exceeded declared bound at x = {x}: |f(x)| = {value} > {bound}")]
    BoundExceeded { x: f64, value: f64, bound: f64 },

    /// A pointwise limit was requested inside the exceptional set.
    #[error("x = {x} within exclusion radius {radius} of exceptional point {point}")]
    ExceptionalPoint { x: f64, point: f64, radius: f64 },

    /// No absolutely continuous profile exists (pure point spectrum).
    #[error("no absolutely continuous profile: {0}")]
    NoAcProfile(String),

    /// Quadrature rule of declared exactness is too coarse for the request.
    #[error("insufficient quadrature degree: need {needed}, rule is exact to {available}")]
    InsufficientDegree { needed: usize, available: usize },

    /// The analytic density of the orthogonality measure is not available.
    #[error("density unavailable for this family: {0}")]
    DensityUnavailable(String),

    /// Breakdown of a coefficient-recovery recursion (non-positive norm ratio).
    #[error("numerical breakdown in {context} at step {step}")]
    Breakdown { context: String, step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that reflect a numerical process failing to converge,
    /// as opposed to invalid input.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            Error::EigenNoConvergence { .. }
                | Error::OrthogonalityLost { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::IntegralNotConverged(..)
                | Error::Breakdown { .. }
        )
    }
}
