use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("both classes must be present (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
