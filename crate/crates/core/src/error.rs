use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tridiagonal eigensolver did not converge for eigenvalue index {index}")]
    EigenNoConvergence { index: usize },

    #[error(
        "Chebyshev expansion needs {needed} terms (limit {limit}); split the evolution into shorter time slices"
    )]
    ChebyshevOverflow { needed: usize, limit: usize },

    #[error("coordinate singularity: |z| = {z} reached the pole at |z| = 1")]
    Singularity { z: f64 },

    #[error("integrator step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("fixed point is not hyperbolic (gamma = {gamma} <= 2)")]
    StableRegime { gamma: f64 },

    #[error("|z| = {z} lies off the separatrix (max {max})")]
    OffSeparatrix { z: f64, max: f64 },

    #[error("quadrature did not converge (error estimate {estimate:e}, value {value:e})")]
    Quadrature { estimate: f64, value: f64 },

    #[error("fit window holds {found} usable points, need at least {needed}")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("series has no positive values in the fit window")]
    NonPositive,

    #[error("{0} overflows double precision")]
    Overflow(String),

    #[error("{failed} of {total} Monte-Carlo trajectories failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParams(_) | Error::InvalidInput(_) | Error::StableRegime { .. }
        )
    }
}
