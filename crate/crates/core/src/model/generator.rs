use rand::Rng;

use crate::model::mask::PROB_CLAMP;
use crate::params::{xavier, Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Per-timestep selection network.
///
/// Each timestep's encoded features, together with the sequence mean (a
/// summary of both past and future), pass through one tanh layer and a
/// sigmoid unit giving the Bernoulli probability of keeping that timestep.
#[derive(Debug, Clone)]
pub struct Generator {
    w_step: ParamId,
    w_context: ParamId,
    hidden_bias: ParamId,
    w_out: ParamId,
    out_bias: ParamId,
    pub features: usize,
    pub hidden: usize,
}

impl Generator {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, features: usize, hidden: usize, init_bias: f64) -> Self {
        Self {
            w_step: store.add("generator.w_step", xavier(rng, features, hidden)),
            w_context: store.add("generator.w_context", xavier(rng, features, hidden)),
            hidden_bias: store.add("generator.hidden_bias", Tensor::zeros(&[hidden])),
            w_out: store.add("generator.w_out", xavier(rng, hidden, 1)),
            out_bias: store.add("generator.out_bias", Tensor::full(&[1], init_bias)),
            features,
            hidden,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 5] {
        [self.w_step, self.w_context, self.hidden_bias, self.w_out, self.out_bias]
    }

    /// Selection probabilities `[B, T]` for `encoded: [B, T, features]`,
    /// clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn probabilities(&self, tape: &mut Tape, params: &Binding, encoded: Var) -> Result<Var> {
        let shape = tape.shape(encoded).to_vec();
        let [batch, steps, features] = shape[..] else {
            return Err(TensorError::Invalid {
                op: "generator",
                msg: format!("expected [B, T, f], got {shape:?}"),
            });
        };
        if features != self.features {
            return Err(TensorError::ShapeMismatch {
                op: "generator",
                left: shape,
                right: vec![self.features, self.hidden],
            });
        }
        let context = tape.mean_axis(encoded, 1)?;
        let context = tape.matmul(context, params.var(self.w_context))?;
        let context = tape.expand(context, 1, steps)?;
        let local = tape.matmul(encoded, params.var(self.w_step))?;
        let pre = tape.add(local, context)?;
        let pre = tape.add_broadcast(pre, params.var(self.hidden_bias))?;
        let hidden = tape.tanh(pre)?;
        let logit = tape.matmul(hidden, params.var(self.w_out))?;
        let logit = tape.add_broadcast(logit, params.var(self.out_bias))?;
        let logit = tape.reshape(logit, &[batch, steps])?;
        let probs = tape.sigmoid(logit)?;
        tape.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    /// `Σ_t [z ln p + (1 - z) ln(1 - p)]` per sample, `[B]`.
    pub fn log_prob(tape: &mut Tape, probs: Var, z: &[f64]) -> Result<Var> {
        let shape = tape.shape(probs).to_vec();
        let zt = tape.constant(Tensor::new(shape.clone(), z.to_vec())?);
        let not_z = tape.constant(Tensor::new(shape, z.iter().map(|v| 1.0 - v).collect())?);
        let log_p = tape.log(probs)?;
        let complement = tape.rsub_scalar(1.0, probs)?;
        let log_q = tape.log(complement)?;
        let a = tape.mul(zt, log_p)?;
        let b = tape.mul(not_z, log_q)?;
        let both = tape.add(a, b)?;
        tape.sum_axis(both, 1)
    }
}
