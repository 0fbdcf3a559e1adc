use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Variants split into two families: domain errors (bad input, violated
/// preconditions) and numerical failures (an iteration that did not converge,
/// a singular system). [`Error::is_numerical`] tells them apart.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite {what} at {at}")]
    NonFinite { what: &'static str, at: f64 },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("topology: {0}")]
    Topology(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("newton iteration failed after {steps} steps, last residual {residual:e}")]
    NonConvergence { steps: usize, residual: f64 },

    #[error("linear solver: {0}")]
    LinearSolver(String),

    #[error("contact angle enforcement: {0}")]
    AngleEnforcement(String),

    #[error("eigensolver: {0}")]
    Eigen(String),
}

impl Error {
    /// True for failures of a numerical method, false for bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Fit(_)
                | Error::Quadrature { .. }
                | Error::NonConvergence { .. }
                | Error::LinearSolver(_)
                | Error::AngleEnforcement(_)
                | Error::Eigen(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
