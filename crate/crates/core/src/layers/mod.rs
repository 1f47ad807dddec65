//! Neural building blocks on top of the tape.

mod attention;
mod dense;
mod lstm;
mod norm;
mod positional;
mod residual;

pub use attention::{AttentionOutput, SelfAttention, MASKED_SCORE};
pub use dense::Dense;
pub use lstm::Lstm;
pub use norm::{LayerNorm, LAYER_NORM_EPS};
pub use positional::PositionalEncodingTable;
pub use residual::ResidualBlock;
