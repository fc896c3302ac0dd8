use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("symmetric eigensolver did not converge on a {dim}x{dim} matrix")]
    EigNoConvergence { dim: usize },

    #[error("invalid sparse matrix: {0}")]
    InvalidSparse(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("penalty domain violated: {0}")]
    Domain(String),

    #[error("degenerate NT scaling: zero divisor at ({row}, {col})")]
    ZeroDivisor { row: usize, col: usize },

    #[error("preconditioner construction failed: {0}")]
    Precond(String),

    #[error("conjugate gradient {reason} after {iterations} iterations (relative residual {residual:.3e})")]
    Pcg {
        reason: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("step repair failed: {0}")]
    StepRepair(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
