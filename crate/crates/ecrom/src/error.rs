//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid boundary conditions: {0}")]
    InvalidBc(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Poisson right-hand side incompatible with singular operator: |sum(rhs)| = {imbalance:e} exceeds {tol:e}")]
    IncompatibleRhs { imbalance: f64, tol: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("Newton iteration did not converge: residual {residual:e} after {iters} iterations (tol {tol:e})")]
    NewtonDiverged { residual: f64, iters: usize, tol: f64 },

    #[error("requested {requested} modes but numerical rank is {rank} (sigma_{m}/sigma_1 < 1e-13)", m = requested)]
    RankExceeded { requested: usize, rank: usize },

    #[error("divergence residual {residual:e} exceeds {tol:e} at step {step}")]
    DivergenceResidual { residual: f64, tol: f64, step: usize },

    #[error("body force segment lies outside the domain: {0}")]
    ForceOutsideDomain(String),

    #[error("missing snapshot file: {0}")]
    MissingSnapshots(String),

    #[error("missing artifact file: {0} (run the producing stage first)")]
    MissingArtifact(String),

    #[error("file format error in {path}: {reason}")]
    FileFormat { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
