use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row index {index} out of range for a matrix with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },

    #[error("selected rows must be distinct, got {0:?}")]
    DuplicateRows([usize; 3]),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid fan: {0}")]
    InvalidFan(String),

    #[error("unsupported gas model: {0}")]
    UnsupportedGas(String),

    #[error("overlap wedge is empty: left slope {left} is not below right slope {right}")]
    EmptyOverlap { left: f64, right: f64 },

    #[error("initial data mismatch: {0}")]
    InitialDataMismatch(String),

    #[error("atom {atom} in region {region} has non-positive density")]
    VacuumAtom { region: usize, atom: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("quadrature did not converge: last change {change:e} exceeds 10x the estimate {estimate:e}")]
    QuadratureNotConverged { change: f64, estimate: f64 },

    #[error("test-function dictionary is empty")]
    EmptyDictionary,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
