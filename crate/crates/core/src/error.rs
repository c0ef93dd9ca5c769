use std::fmt;

/// Which admissibility clause a model failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    /// psi'(0+) <= 0: the process does not drift to +infinity.
    Drift { psi_prime0: f64 },
    /// The Levy measure lacks the (p+1)-th moment on (-inf,-1).
    Moment { p: f64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Drift { psi_prime0 } => {
                write!(f, "drift clause failed: psi'(0+) = {psi_prime0} is not positive")
            }
            Rejection::Moment { p } => {
                write!(f, "moment clause failed: jump tail lacks moment of order {}", p + 1.0)
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model rejected: {0}")]
    Rejected(Rejection),
    #[error("root bracket failed: {0}")]
    Bracket(String),
    #[error("convolution series did not converge within {terms} terms")]
    SeriesNonConvergence { terms: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("quadrature tail too large: {0}")]
    TailTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
