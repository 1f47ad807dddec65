use rand::Rng;

use crate::layers::{Dense, LayerNorm};
use crate::params::{Binding, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, TensorError};

/// `LN(x + W2·relu(W1·x + b1) + b2)` applied row-wise.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub inner: Dense,
    pub outer: Dense,
    norm: LayerNorm,
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize, width: usize) -> Self {
        Self {
            inner: Dense::new(store, rng, &format!("{name}.inner"), dim, width),
            outer: Dense::new(store, rng, &format!("{name}.outer"), width, dim),
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var> {
        let d = *tape.shape(x).last().unwrap_or(&0);
        if d != self.inner.inputs {
            return Err(TensorError::ShapeMismatch {
                op: "residual_block",
                left: tape.shape(x).to_vec(),
                right: vec![self.inner.inputs, self.inner.outputs],
            });
        }
        let h = self.inner.forward(tape, params, x)?;
        let h = tape.relu(h)?;
        let f = self.outer.forward(tape, params, h)?;
        let sum = tape.add(x, f)?;
        self.norm.forward(tape, params, sum)
    }
}
