use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("ambient dimension {dim} exceeds the exhaustive search limit of {max}")]
    Capacity { dim: usize, max: usize },

    #[error("infeasible generator configuration: {0}")]
    Infeasible(String),

    #[error("no admissible instance after {attempts} attempts")]
    RetryExhausted { attempts: usize },

    #[error("malformed instance file: {0}")]
    Malformed(String),

    #[error("instance validation failed: {0}")]
    Validation(String),

    #[error("internal contract violated: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
