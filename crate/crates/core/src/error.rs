use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("ill-conditioned geometry (reciprocal condition number {rcond:.3e})")]
    IllConditioned { rcond: f64 },

    #[error("insufficient anchors: {available} available, at least 3 required")]
    InsufficientAnchors { available: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection budget exhausted after placing {placed} of {requested} users")]
    RejectionBudgetExhausted { placed: usize, requested: usize },

    #[error("projected steering vector has zero norm")]
    ZeroProjection,

    #[error("measurement vector is zero")]
    ZeroMeasurement,

    #[error("unidentifiable configuration: Fisher information matrix is singular")]
    Unidentifiable,

    #[error("unknown IRS index {0}")]
    UnknownIrs(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("malformed session dump: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
