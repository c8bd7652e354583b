//! Noisy-sinusoid corpus construction and the optimization loop.

mod checkpoint;
mod dataset;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dataset::{build_item, build_sinusoid_dataset, DatasetItem, DatasetSpec};
pub use trainer::{evaluate_loss, train, train_from, train_step, TrainOutcome, TrainingConfig};
