use std::fmt;

/// Errors surfaced by the tracking and learning primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Matrix or vector shapes do not line up for the requested operation.
    DimensionMismatch { expected: String, got: String },
    /// A Gram matrix could not be factorized (rank deficiency or loss of
    /// positive definiteness).
    SingularMatrix(String),
    /// A NaN or infinity appeared in inputs or intermediates.
    NonFinite(String),
    /// The operation requires a nonempty input.
    EmptyInput(String),
    /// A rectangle or box falls outside the image it is evaluated on.
    OutOfBounds(String),
    /// A class count required to be positive was zero.
    ZeroClassCount { positives: usize, negatives: usize },
    /// A denominator in a ratio was zero.
    ZeroDenominator(String),
    /// Invalid parameter value.
    InvalidParameter(String),
    /// Malformed serialized state.
    InvalidState(String),
    /// Error attributed to a frame index while driving a sequence.
    AtFrame(usize, Box<CoreError>),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::SingularMatrix(what) => write!(f, "singular matrix: {what}"),
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::EmptyInput(what) => write!(f, "empty input: {what}"),
            CoreError::OutOfBounds(what) => write!(f, "out of bounds: {what}"),
            CoreError::ZeroClassCount { positives, negatives } => write!(
                f,
                "class weights undefined for counts P={positives}, N={negatives}"
            ),
            CoreError::ZeroDenominator(what) => write!(f, "zero denominator in {what}"),
            CoreError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            CoreError::InvalidState(what) => write!(f, "invalid state: {what}"),
            CoreError::AtFrame(index, source) => write!(f, "frame {index}: {source}"),
        }
    }
}

impl std::error::Error for CoreError {}

pub type Result<T> = std::result::Result<T, CoreError>;
