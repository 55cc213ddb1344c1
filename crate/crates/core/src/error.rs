//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by instance construction, solvers, schedules, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transition row not stochastic at (x={state}, u={action}): sum={sum}")]
    NotStochastic {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("negative probability at (x={state}, u={action}, x'={next}): {value}")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("discount factor must lie in (0,1), got {0}")]
    InvalidGamma(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value iteration did not converge within {cap} iterations (residual {residual})")]
    NonConvergence { cap: u64, residual: f64 },

    #[error("direct solve requires policy-evaluation instance (|U|=1), got |U|={actions}")]
    NotPolicyEvaluation { actions: usize },

    #[error("linear system is singular or ill-conditioned (pivot {pivot} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },

    #[error("direct solve residual {residual} exceeds tolerance {tolerance}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("sample budget {budget} below schedule requirement {required}")]
    BudgetTooSmall { budget: u64, required: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate slope fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad
    /// input or configuration). The CLI maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularSystem { .. }
                | Error::ResidualTooLarge { .. }
                | Error::BudgetTooSmall { .. }
                | Error::DegenerateFit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
