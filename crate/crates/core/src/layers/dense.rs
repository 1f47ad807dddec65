use rand::Rng;

use crate::params::{xavier, Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor};

/// Affine map `x·W + b` over the last axis.
#[derive(Debug, Clone)]
pub struct Dense {
    weight: ParamId,
    bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier(rng, inputs, outputs));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var> {
        let y = tape.matmul(x, params.var(self.weight))?;
        tape.add_broadcast(y, params.var(self.bias))
    }
}
