use thiserror::Error;

/// Errors raised anywhere in the reduced-order modelling pipeline.
#[derive(Debug, Error)]
pub enum RomError {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("entity index {index} out of range (0..{len})")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{solver} did not converge after {iterations} iterations (final norm {final_norm:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        final_norm: f64,
    },

    #[error("singular {what} (condition estimate {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("basis is empty: all snapshot deviations are numerically zero")]
    EmptyBasis,

    #[error("NNLS stopped after {iterations} iterations at relative residual {best_ratio:e} (target {target:e})")]
    NnlsStalled {
        iterations: usize,
        best_ratio: f64,
        target: f64,
    },

    #[error("sampling budget exceeded after {cycles} cycles (max error {max_error:e})")]
    BudgetExceeded { cycles: usize, max_error: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RomError>;
