//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by estimation, model construction and numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the domain of a divergence, model or weight function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or parameter value.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The integrand returned NaN or an infinity at an interior abscissa.
    #[error("integrand evaluated to {value} at x = {abscissa:e}")]
    NonFiniteIntegrand { abscissa: f64, value: f64 },

    /// A density or normalization integral does not converge.
    #[error("not integrable: {0}")]
    NotIntegrable(String),

    /// Quadrature failed to reach tolerance where a finite answer is required.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// Weight function is singular at the requested argument.
    #[error("singularity: {0}")]
    Singularity(String),

    /// The shifted weight does not satisfy the bounded-and-vanishing requirement.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// All weights underflowed to zero during reweighting.
    #[error("degenerate weights: sum of weights is {sum:e}")]
    DegenerateWeights { sum: f64 },

    /// No start of the fixed-point iteration converged.
    #[error("estimator did not converge; best residual {best_residual:e}")]
    NotConverged {
        best_residual: f64,
        best: Box<crate::estimator::EstimateResult>,
    },

    /// Endpoint limits of a continuous Bregman model disagree.
    #[error("endpoint condition violated: {0}")]
    EndpointCondition(String),

    /// Jacobian of the estimating function is singular.
    #[error("singular J matrix (smallest singular value {smallest_singular_value:e})")]
    SingularJacobian { smallest_singular_value: f64 },

    /// Malformed dataset or matrix input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
