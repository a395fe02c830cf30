use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("quadrature did not converge: error estimate {achieved:.3e} > requested {requested:.3e} after {intervals} intervals")]
    Quadrature {
        achieved: f64,
        requested: f64,
        intervals: usize,
    },

    #[error("divergent limit: {0}")]
    Divergent(String),

    /// The half-sided transform at infinite time only exists for `Im ω > 0`
    /// (and on the real axis as a boundary value).
    #[error("transform does not converge for Im(omega) = {im:.3e} < 0 at infinite time")]
    LowerHalfPlane { im: f64 },

    #[error("step size too coarse: halving estimate {estimate:.3e} exceeds {limit:.3e}")]
    StepTooCoarse { estimate: f64, limit: f64 },

    #[error("root not found: {0}")]
    NoRoot(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
