use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("requested {requested} modes but the truncation only holds {capacity}")]
    Capacity { requested: usize, capacity: usize },

    #[error("index {index} outside 0..={max}")]
    Range { index: usize, max: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("hypotheses not satisfied: {0}")]
    Inapplicable(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("could not determine {0}")]
    Undetermined(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
