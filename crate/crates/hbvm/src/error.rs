//! Error type shared by all modules.

use crate::integrator::Trajectory;
use crate::solver::GammaVector;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An evaluation point left the unit interval.
    #[error("{what} = {value} lies outside [0, 1]")]
    OutOfDomain { what: &'static str, value: f64 },

    /// A problem name not present in the registry.
    #[error("unknown problem '{name}'; available: {registry}")]
    UnknownProblem { name: String, registry: String },

    /// The iteration did not reach the requested tolerance.
    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Last iterate, for diagnosis or restarting.
        last: GammaVector,
    },

    /// The vector field produced a NaN or infinity.
    #[error("vector field returned a non-finite value at quadrature node {node}")]
    NonFiniteField { node: usize },

    /// The frozen-Jacobian Newton matrix could not be factored.
    #[error("simplified-Newton matrix is singular")]
    SingularNewtonMatrix,

    /// A multi-step run failed part-way; the completed steps are attached.
    #[error("integration aborted at step {step}: {source}")]
    Aborted {
        step: usize,
        partial: Box<Trajectory>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
