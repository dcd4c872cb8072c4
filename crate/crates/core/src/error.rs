use thiserror::Error;

/// Errors raised across the engine. Each variant names the failing module's
/// contract so callers can attribute failures without string matching.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} is not a node of the grid (dt = {dt})")]
    GridAlignment { t: f64, dt: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("regression failed at step {step} with basis order {order}: {reason}")]
    Solver {
        step: usize,
        order: usize,
        reason: String,
    },

    #[error("capability error: engine `{engine}` cannot {what}")]
    Capability { engine: String, what: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate model: {0}")]
    ModelDegeneracy(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
