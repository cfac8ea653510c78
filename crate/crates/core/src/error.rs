use thiserror::Error;

/// Errors raised by the spectral machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),

    #[error("truncation error: product needs max_degree >= {required}, backend has {available}")]
    Truncation { required: usize, available: usize },

    #[error("mass matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditionedMass { condition: f64 },

    #[error("direction not admissible: mean {mean:.3e} over the conformal volume is not zero")]
    DirectionNotAdmissible { mean: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("no convergence after {iterations} iterations (best residual {best_residual:.3e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("hypothesis violated: energy density {value:.3e} at node {node} is not positive")]
    HypothesisViolation { node: usize, value: f64 },

    #[error("invalid map: sphere constraint violated by {violation:.3e}")]
    InvalidMap { violation: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
