//! The rationalising classifier, its baselines and the training objective.

mod generator;
mod mask;
mod network;
pub mod objective;
mod step;

pub use generator::Generator;
pub use mask::{bernoulli_log_prob, clamp_prob, enumerate_masks, MaskMode, RationaleMask, PROB_CLAMP};
pub use network::{prepare_inputs, ClassifierOutput, ForwardPass, MaskPolicy, Model, ModelKind, INIT_STREAM, MAX_STEPS};
pub use step::{predict, score_function_surrogate, training_step, LossBreakdown, Predictions, RewardBaseline, StepError};
