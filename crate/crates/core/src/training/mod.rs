//! Optimizers, batching, the training loop and grid search.

mod batching;
pub mod grid;
mod optimizer;
mod trainer;

pub use batching::{make_batches, padded_batch_loss, split_long_sentences, Batch};
pub use optimizer::{update, Optimizer, OptimizerConfig, OptimizerKind, Slot};
pub use trainer::{
    batch_gradients, evaluate_model, predict_corpus, predict_tags, train, train_with_observer, EpochRecord, StopReason,
    TrainConfig, TrainReport, TrainStatus,
};
