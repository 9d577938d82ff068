use thiserror::Error;

/// Crate-wide error type. Variants name the contract that was broken rather
/// than the call site, so they can travel across module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("metric violation: {0}")]
    MetricViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded linear program")]
    Unbounded,

    #[error("iteration limit exceeded: {0}")]
    IterationLimit(String),

    #[error("missing penalty: {0}")]
    MissingPenalty(String),

    #[error("missing capacity: {0}")]
    MissingCapacity(String),

    #[error("unknown facility: {0}")]
    UnknownFacility(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("instance too large for exhaustive solve: {0}")]
    TooLarge(String),

    #[error("fractional point is not feasible: {0}")]
    NotFeasibleFractional(String),

    #[error("scaling precondition violated: {0}")]
    ScalePreconditionViolated(String),

    #[error("invalid solution: {0}")]
    InvalidSolution(String),

    #[error("penalty client overlaps assignment: {0}")]
    Overlap(String),

    #[error("infeasible input solution: {0}")]
    InfeasibleInput(String),

    #[error("cardinality exceeded: {0}")]
    CardinalityExceeded(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
