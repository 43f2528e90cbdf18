use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not one of 2, 4, 16")]
    InvalidDimension(usize),
    #[error("tensor product dimension {0} exceeds 16")]
    DimensionOverflow(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("state is not normalized (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("basis vectors {i} and {j} are not orthonormal")]
    NotOrthonormal { i: usize, j: usize },
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("correlation cell has no counts")]
    EmptyCell,
    #[error("no revealed rounds to estimate from")]
    EmptySample,
    #[error("no coincidences recorded")]
    NoCoincidences,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("session aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
