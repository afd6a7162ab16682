//! Optimization loops and evaluation metrics.

pub mod metrics;
pub mod trainer;

pub use metrics::{evaluate, exact_match, rouge1_f1, token_accuracy, MetricsReport, TokenAccuracy};
pub use trainer::{
    batch_gradients, fine_tune, train, trainable_groups, Adam, EpochRecord, Selection, StopReason, TrainReport,
    TrainingConfig, Unfreezing,
};
