use crate::params::{Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: ParamId,
    bias: ParamId,
}

impl LayerNorm {
    /// Gain starts at one and bias at zero.
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[dim], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var> {
        tape.layer_norm(x, params.var(self.gain), params.var(self.bias), LAYER_NORM_EPS)
    }
}
