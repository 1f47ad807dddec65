//! Optimiser, configuration, training loop, baselines and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod trace;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, RngState, CHECKPOINT_VERSION};
pub use config::{ConfigError, Estimator, EvalMask, ModelConfig, Variant};
pub use trace::{EpochRecord, TrainTrace};
pub use trainer::{build_baseline, score_episodes, train, train_with_progress, TrainError, TrainOutcome, EVAL_STREAM};
