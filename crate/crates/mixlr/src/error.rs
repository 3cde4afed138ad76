use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("component matching supports k <= {max}, got k = {got}")]
    MatchingTooLarge { got: usize, max: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("label bound {bound} is infeasible: acceptance rate {rate:.4} over {probed} probe draws")]
    InfeasibleLabelBound {
        bound: f64,
        rate: f64,
        probed: usize,
    },

    #[error("insufficient samples for split mode: {0}")]
    InsufficientSamples(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
