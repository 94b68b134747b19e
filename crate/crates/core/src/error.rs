use thiserror::Error;

/// Errors raised by the discretization, solvers and optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A time window or grid prefix does not coincide with time nodes.
    #[error("time alignment error: {0}")]
    Alignment(String),

    /// Inputs violate a structural invariant (lengths, node counts, grid shapes).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Data outside the admissible domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("Newton iteration diverged at time step {step} (residual {residual:e} after {iterations} iterations)")]
    SolverDivergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    /// A step matrix lost positive definiteness during factorization.
    #[error("singular step matrix at row {row} (pivot {pivot:e})")]
    Singular { row: usize, pivot: f64 },

    #[error("line search stalled at iteration {iteration}: step {step:e} below minimum")]
    LineSearchStall { iteration: usize, step: f64 },

    #[error("dense oracle refused: {0}")]
    OracleTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
