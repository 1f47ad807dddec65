use rand::Rng;

use crate::layers::LayerNorm;
use crate::params::{xavier, Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Score added to masked-out keys before the softmax. Finite, so the tape's
/// finiteness check still holds, and large enough that `exp` underflows to 0.
pub const MASKED_SCORE: f64 = -1e30;

/// Single-head scaled dot-product self-attention followed by a residual
/// connection and layer normalisation:
/// `LN(x + softmax(Q·Kᵀ/√d_k)·V·W_out)` with `Q, K, V = x·W_Q, x·W_K, x·W_V`.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    w_query: ParamId,
    w_key: ParamId,
    w_value: ParamId,
    w_out: ParamId,
    norm: LayerNorm,
    pub model_dim: usize,
    pub key_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    /// `[batch, T, model_dim]`
    pub output: Var,
    /// Row-stochastic `[batch, T, T]`; row `i` is how query `i` spreads over keys.
    pub weights: Var,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, model_dim: usize, key_dim: usize) -> Self {
        assert!(key_dim > 0 && model_dim > 0);
        Self {
            w_query: store.add(format!("{name}.w_query"), xavier(rng, model_dim, key_dim)),
            w_key: store.add(format!("{name}.w_key"), xavier(rng, model_dim, key_dim)),
            w_value: store.add(format!("{name}.w_value"), xavier(rng, model_dim, key_dim)),
            w_out: store.add(format!("{name}.w_out"), xavier(rng, key_dim, model_dim)),
            norm: LayerNorm::new(store, &format!("{name}.norm"), model_dim),
            model_dim,
            key_dim,
        }
    }

    /// `x` is `[batch, T, model_dim]`. `key_mask`, if given, is a flat
    /// `batch × T` 0/1 vector; keys with 0 receive no attention. A row whose
    /// keys are all masked attends uniformly.
    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var, key_mask: Option<&[f64]>) -> Result<AttentionOutput> {
        let shape = tape.shape(x).to_vec();
        let [batch, steps, dim] = shape[..] else {
            return Err(TensorError::Invalid {
                op: "self_attention",
                msg: format!("expected [B, T, d], got {shape:?}"),
            });
        };
        if dim != self.model_dim {
            return Err(TensorError::ShapeMismatch {
                op: "self_attention",
                left: shape,
                right: vec![self.model_dim, self.key_dim],
            });
        }
        let q = tape.matmul(x, params.var(self.w_query))?;
        let k = tape.matmul(x, params.var(self.w_key))?;
        let v = tape.matmul(x, params.var(self.w_value))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let mut scores = tape.scale(scores, 1.0 / (self.key_dim as f64).sqrt())?;
        if let Some(mask) = key_mask {
            if mask.len() != batch * steps {
                return Err(TensorError::Invalid {
                    op: "self_attention",
                    msg: format!("key mask has {} entries, expected {}", mask.len(), batch * steps),
                });
            }
            let mut bias = vec![0.0; batch * steps * steps];
            for b in 0..batch {
                for i in 0..steps {
                    for j in 0..steps {
                        if mask[b * steps + j] == 0.0 {
                            bias[(b * steps + i) * steps + j] = MASKED_SCORE;
                        }
                    }
                }
            }
            let bias = tape.constant(Tensor::new(vec![batch, steps, steps], bias)?);
            scores = tape.add(scores, bias)?;
        }
        let weights = tape.softmax(scores, 2)?;
        let context = tape.matmul(weights, v)?;
        let projected = tape.matmul(context, params.var(self.w_out))?;
        let residual = tape.add(x, projected)?;
        let output = self.norm.forward(tape, params, residual)?;
        Ok(AttentionOutput { output, weights })
    }

    /// The same layer on a single `[T, model_dim]` sequence.
    pub fn forward_single(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<AttentionOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::Invalid {
                op: "self_attention",
                msg: format!("expected [T, d], got {shape:?}"),
            });
        }
        let x3 = tape.reshape(x, &[1, shape[0], shape[1]])?;
        let out = self.forward(tape, params, x3, None)?;
        Ok(AttentionOutput {
            output: tape.reshape(out.output, &shape)?,
            weights: tape.reshape(out.weights, &[shape[0], shape[0]])?,
        })
    }
}
