use thiserror::Error;

/// Errors surfaced by the solver stack.
///
/// Non-convergence carries the best iterate found so callers can inspect or
/// report partial results.
#[derive(Debug, Clone, Error)]
pub enum SolverError<F> {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("line search stagnated after {halvings} halvings (gradient norm {grad_norm})")]
    LineSearchStagnation {
        halvings: usize,
        grad_norm: f64,
        best: Vec<F>,
    },

    #[error("{layer} did not converge within {iterations} iterations (residual {residual})")]
    NonConvergence {
        layer: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<F>,
    },
}

pub type Result<T, F> = std::result::Result<T, SolverError<F>>;
