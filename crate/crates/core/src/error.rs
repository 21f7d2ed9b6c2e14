use thiserror::Error;

/// Errors raised by type computations, model construction, bound solvers and
/// the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("symbol vector is empty")]
    EmptyVector,
    #[error("order {order} exceeds vector length {len}")]
    OrderExceedsLength { order: usize, len: usize },
    #[error("order {order} is outside the supported range 1..={max}")]
    OrderOutOfRange { order: usize, max: usize },
    #[error("vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("symbol {symbol} at position {position} is outside an alphabet of size {alphabet}")]
    SymbolOutOfRange {
        symbol: usize,
        position: usize,
        alphabet: usize,
    },
    #[error("invalid type: {0}")]
    InvalidType(String),
    #[error("type has no exact denominator")]
    NonExactType,
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
    #[error("expected a type of order {expected}, got order {actual}")]
    OrderMismatch { expected: usize, actual: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid model field `{field}`: {reason}")]
    InvalidModel { field: String, reason: String },
    #[error("model has no sensor mixture")]
    NoMixture,
    #[error("joint type is not feasible for this problem: {0}")]
    InfeasibleLambda(String),
    #[error("free-dimension grid has {points} points, above the limit of {limit}")]
    DimensionTooLarge { points: f64, limit: f64 },
    #[error("feasible set is empty: {0}")]
    EmptyFeasibleSet(String),
    #[error("inner solver diverged: {0}")]
    InnerSolverDiverged(String),
    #[error("conditional distribution undefined at output {output}")]
    ConditionalUndefined { output: usize },
    #[error("variant `{variant}` is not supported here: {reason}")]
    UnsupportedVariant { variant: String, reason: String },
    #[error("replication factor {0} must be odd")]
    EvenReplication(usize),
    #[error("sensor range {range} exceeds a field of {positions} positions")]
    RangeExceedsField { range: usize, positions: usize },
    #[error("symbol {symbol} at position {position} violates the alphabet")]
    AlphabetViolation { symbol: usize, position: usize },
    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn model(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidModel {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
