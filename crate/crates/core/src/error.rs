use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} exceeds the supported maximum of 16")]
    DimensionOverflow(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} labels for dimension {dim}, got {got}")]
    LabelMismatch { dim: usize, expected: usize, got: usize },
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("matrix is not a valid density matrix: {0}")]
    InvalidDensity(String),
    #[error("unknown tensor factor `{0}`")]
    UnknownFactor(String),
    #[error("invalid probability distribution: {0}")]
    InvalidProbabilities(String),
    #[error("parameter `{name}` = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

impl Error {
    pub(crate) fn range(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::OutOfRange {
            name,
            value,
            expected,
        }
    }
}
