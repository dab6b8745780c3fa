use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input component at index {0}")]
    NonFiniteInput(usize),

    #[error("empty network list")]
    EmptyList,

    #[error("shrink margin {margin} violates eps < (b_i - a_i)/2 in coordinate {coord}")]
    MarginViolation { margin: f64, coord: usize },

    #[error("depth budget {budget} too small (need at least {needed})")]
    BudgetTooSmall { budget: usize, needed: usize },

    #[error("weight {value} in layer {layer} outside quantization range {limit}")]
    QuantizeRange {
        layer: usize,
        value: f64,
        limit: f64,
    },

    #[error("point outside partition domain in coordinate {0}")]
    OutOfDomain(usize),

    #[error("coefficient {value} for output {output} exceeds bound {bound}")]
    CoefficientOutOfBound {
        output: usize,
        value: f64,
        bound: f64,
    },

    #[error("measure has nonpositive total mass")]
    DegenerateMeasure,

    #[error("non-finite function value at point {0:?}")]
    NonFiniteValue(Vec<f64>),

    #[error(
        "offset rejection exhausted after {attempts} draws; worst regression slope {worst_slope}"
    )]
    OffsetRejection { attempts: usize, worst_slope: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("center lies on the boundary of Q")]
    CenterOnBoundary,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ApproxError>;
