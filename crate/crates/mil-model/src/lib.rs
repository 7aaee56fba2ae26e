//! Strong and weak learners for binary multiple-instance classification.
//!
//! Both learners share the same instance encoder and the same final
//! classifier. The strong learner scores individual instances and pools an
//! examination score by taking the max; the weak learner pools instance
//! features through a two-layer attention mechanism with sparsemax weights
//! and classifies the pooled feature, so it trains from bag labels alone.
//! With a single-instance bag the attention reduces to the identity and the
//! two learners coincide exactly.

mod bag;
mod checkpoint;
mod error;
mod forward;
mod params;
mod train;

pub use bag::{Bag, Instance};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_as, read_checkpoint, save_checkpoint, write_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use error::{ModelError, Result};
pub use forward::{
    predict_bag, predict_bag_strong, predict_bag_subset, predict_empty_surrogate,
    predict_instance, predict_instances,
};
pub use params::{
    Attention, Classifier, ConvEncoder, Encoder, EncoderConfig, LearnerKind, ModelParams,
    VectorEncoder, ATTENTION_HIDDEN, FEATURE_DIM,
};
pub use train::{train, train_strong, train_weak, EpochStats, TrainConfig, TrainOutcome};

/// Training-pass internals, exposed for gradient verification in tests.
#[doc(hidden)]
pub mod internals {
    pub use crate::forward::{
        strong_train_backward, strong_train_forward, weak_train_backward, weak_train_forward,
        StrongForward, WeakForward,
    };
}
