use thiserror::Error;

/// Everything that can go wrong while evaluating a law.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A user-supplied parameter violates a precondition.
    #[error("{0}")]
    InvalidParameter(String),

    #[error("point {x} lies outside the state interval ({what})")]
    DomainViolation { x: f64, what: &'static str },

    #[error("geometry violation: {0}")]
    GeometryViolation(String),

    #[error("diffusion coefficient is not positive at x = {x}")]
    NonPositiveDiffusion { x: f64 },

    #[error("eigenfunctions unavailable at q = {q}: {reason}")]
    EigenfunctionUnavailable { q: f64, reason: String },

    #[error("quadrature did not converge (partial value {value}, error bound {error})")]
    MaxDepthExceeded { value: f64, error: f64 },

    #[error("tail witness did not decay (reached {reached}, witness {witness})")]
    TailNotDecaying { reached: f64, witness: f64 },

    #[error("non-finite integrand at x = {at}")]
    NonFinite { at: f64 },

    #[error("eigenfunction solver did not converge: {0}")]
    NonConvergence(String),

    #[error("far-field anchor {anchor} leaves the state interval")]
    WindowTooWide { anchor: f64 },

    #[error("Laplace inversion diverged (value {value}, diagnostic {diagnostic})")]
    DivergentAcceleration { value: f64, diagnostic: f64 },
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::DomainViolation { .. }
                | Error::GeometryViolation(_)
                | Error::NonPositiveDiffusion { .. }
        )
    }

    /// Short variant name used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DomainViolation { .. } => "DomainViolation",
            Error::GeometryViolation(_) => "GeometryViolation",
            Error::NonPositiveDiffusion { .. } => "NonPositiveDiffusion",
            Error::EigenfunctionUnavailable { .. } => "EigenfunctionUnavailable",
            Error::MaxDepthExceeded { .. } => "MaxDepthExceeded",
            Error::TailNotDecaying { .. } => "TailNotDecaying",
            Error::NonFinite { .. } => "NonFinite",
            Error::NonConvergence(_) => "NonConvergence",
            Error::WindowTooWide { .. } => "WindowTooWide",
            Error::DivergentAcceleration { .. } => "DivergentAcceleration",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be nonnegative")))
    }
}

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}
