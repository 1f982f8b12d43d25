use thiserror::Error;

/// Errors raised by simulation, inference and the assumption checkers.
#[derive(Debug, Error)]
pub enum LanError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {context} at t = {time}")]
    NonFinite { context: String, time: f64 },

    #[error("state left the state space at t = {time}: {detail}")]
    StateEscape { time: f64, detail: String },

    #[error("reconstruction diverged at t = {time}: {detail}")]
    ReconstructionDivergence { time: f64, detail: String },

    #[error("ellipticity violated at t = {time}: smallest eigenvalue {min_eigenvalue:e}")]
    Ellipticity { time: f64, min_eigenvalue: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("broken model: {0}")]
    BrokenModel(String),

    #[error("chain is empty: horizon {horizon} is shorter than the period {period}")]
    EmptyChain { horizon: f64, period: f64 },

    #[error("objective is flat over the search window; parameter not identifiable")]
    NonIdentifiable,

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("trajectory format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LanError>;
