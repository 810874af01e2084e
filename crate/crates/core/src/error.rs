//! Error type shared by all solver stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(String),

    #[error("coefficients: {0}")]
    Coefficients(String),

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("linear solve failed: best relative residual {residual:.3e} after {iterations} refinement steps (tol {tol:.1e})")]
    SolveResidual {
        residual: f64,
        iterations: usize,
        tol: f64,
    },

    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {column})")]
    Singular { pivot: f64, column: usize },

    #[error("optimize: {0}")]
    Optimize(String),

    #[error("check failed: {0}")]
    CheckFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
