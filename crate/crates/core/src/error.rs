use thiserror::Error;

/// Errors raised by the solvers, simulators and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration blew up at node {node} (t = {time})")]
    IntegrationBlowup { node: usize, time: f64 },

    #[error("numerical degeneracy at node {node}: {what}")]
    Degenerate { node: usize, what: String },

    #[error("fixed-point system singular at node {node} (condition number {condition:.3e})")]
    SingularCoupling { node: usize, condition: f64 },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("inadmissible perturbation: {0}")]
    Inadmissible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
