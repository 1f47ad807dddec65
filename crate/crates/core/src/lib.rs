//! Rationalising attention classifier for hourly in-home sensor episodes.
//!
//! A generator network samples a binary mask over the 24 hourly timesteps of
//! an episode; the masked sequence is read by an LSTM, a single-head
//! self-attention block and residual blocks, and trained with focal loss
//! plus an L1 penalty on the mask. The discrete mask is trained with a
//! score-function estimator.
//!
//! Everything runs on the small reverse-mode autodiff in [`tape`].

pub mod cli;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tape::{Tape, Var};
pub use tensor::{Tensor, TensorError};
