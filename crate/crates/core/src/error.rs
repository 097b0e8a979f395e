use thiserror::Error;

/// Errors raised by the geometric kernels, solvers and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, got {found}")]
    ArityMismatch { expected: String, found: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("strict contact dynamics needs a z-independent Hamiltonian (|dH/dz| = {0:e} at a probe state)")]
    NotStrict(f64),

    #[error("vector field divergence is not constant (spread {0:e})")]
    NonConstantDivergence(f64),

    #[error("integration blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("non-finite values in density at step {0}")]
    NonFiniteDensity(usize),

    #[error("{fraction:e} of the mass sits in the outer z-cells (threshold {threshold:e})")]
    BoundaryMass { fraction: f64, threshold: f64 },

    #[error("no data")]
    NoData,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
