use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("action {action} is outside the action set of size {n_actions}")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("trajectory too short: need index {needed}, have {available} states")]
    NeedsMoreData { needed: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("undefined greedy minimizer: theta_3 = {theta3} must be positive")]
    UndefinedMinimizer { theta3: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
