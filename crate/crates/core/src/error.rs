use thiserror::Error;

/// Errors produced by the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:.3e} is too small to normalize")]
    ZeroNorm { norm: f64 },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("input must be nonempty")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("gradient contains non-finite values")]
    NonFiniteGradient,

    #[error("selection mask keeps no views")]
    EmptySelection,

    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("probability vector invalid: {0}")]
    InvalidProbability(String),

    #[error("input contains non-finite values ({context})")]
    NonFiniteInput { context: &'static str },

    #[error("failed to draw {classes} separated prototypes after {attempts} attempts")]
    SeparationFailure { classes: usize, attempts: usize },

    #[error("invalid value {value} for sweep axis {axis}")]
    InvalidAxisValue { axis: String, value: f64 },

    #[error("invalid task parameters: {0}")]
    InvalidTask(String),

    #[error("malformed task file: {0}")]
    TaskFormat(String),

    #[error("malformed sweep csv: {0}")]
    SweepFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
