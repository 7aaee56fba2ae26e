use mil_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("bag {bag}: bag label {bag_label} contradicts OR of instance labels {or_label}")]
    LabelInconsistent {
        bag: String,
        bag_label: bool,
        or_label: bool,
    },
    #[error("bag {0} has no instances")]
    EmptyBag(String),
    #[error("bag {bag}: instance {index} has shape {got:?}, expected {expected:?}")]
    InstanceShape {
        bag: String,
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("operation requires a {expected:?} learner, got {got:?}")]
    WrongKind {
        expected: crate::params::LearnerKind,
        got: crate::params::LearnerKind,
    },
    #[error("instance has shape {got:?} but the encoder expects {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{mode} training requires a label on every instance; bag {bag} instance {index} has none")]
    MissingInstanceLabel {
        mode: &'static str,
        bag: String,
        index: usize,
    },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid learner kind byte {0}")]
    BadKindByte(u8),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("checkpoint tensor {tensor}: {reason}")]
    BadTensor { tensor: String, reason: String },
    #[error("checkpoint tensor {tensor} has shape {got:?}, expected {expected:?}")]
    TensorShape {
        tensor: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint contains unexpected tensor {0}")]
    UnknownTensor(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
