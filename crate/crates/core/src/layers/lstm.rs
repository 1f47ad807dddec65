use rand::Rng;

use crate::params::{xavier, Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Single-layer LSTM. Gate blocks are packed along the last axis in the
/// order input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    w_input: ParamId,
    w_hidden: ParamId,
    bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, inputs: usize, hidden: usize) -> Self {
        let mut w_input = Tensor::zeros(&[inputs, 4 * hidden]);
        let mut w_hidden = Tensor::zeros(&[hidden, 4 * hidden]);
        // each gate block gets its own Xavier draw
        for gate in 0..4 {
            let wi = xavier(rng, inputs, hidden);
            let wh = xavier(rng, hidden, hidden);
            for r in 0..inputs {
                w_input.data_mut()[r * 4 * hidden + gate * hidden..][..hidden]
                    .copy_from_slice(&wi.data()[r * hidden..(r + 1) * hidden]);
            }
            for r in 0..hidden {
                w_hidden.data_mut()[r * 4 * hidden + gate * hidden..][..hidden]
                    .copy_from_slice(&wh.data()[r * hidden..(r + 1) * hidden]);
            }
        }
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Self {
            w_input: store.add(format!("{name}.w_input"), w_input),
            w_hidden: store.add(format!("{name}.w_hidden"), w_hidden),
            bias: store.add(format!("{name}.bias"), bias),
            inputs,
            hidden,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.w_input, self.w_hidden, self.bias]
    }

    /// Runs the recurrence over `x: [batch, T, inputs]` (or `[T, inputs]`)
    /// from zero state and returns every hidden state, `[batch, T, hidden]`
    /// (or `[T, hidden]`).
    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (batch, steps, features) = match shape[..] {
            [t, f] => (1, t, f),
            [b, t, f] => (b, t, f),
            _ => {
                return Err(TensorError::Invalid {
                    op: "lstm",
                    msg: format!("expected [T, f] or [B, T, f], got {shape:?}"),
                })
            }
        };
        if features != self.inputs {
            return Err(TensorError::ShapeMismatch {
                op: "lstm",
                left: shape,
                right: vec![self.inputs, 4 * self.hidden],
            });
        }
        let h = self.hidden;
        let projected = tape.matmul(x, params.var(self.w_input))?;
        let projected = tape.add_broadcast(projected, params.var(self.bias))?;
        let projected = tape.reshape(projected, &[batch, steps, 4 * h])?;

        let mut state: Option<(Var, Var)> = None;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let step = tape.slice(projected, 1, t, t + 1)?;
            let mut gates = tape.reshape(step, &[batch, 4 * h])?;
            if let Some((hidden, _)) = state {
                let recurrent = tape.matmul(hidden, params.var(self.w_hidden))?;
                gates = tape.add(gates, recurrent)?;
            }
            let i = tape.slice(gates, 1, 0, h)?;
            let i = tape.sigmoid(i)?;
            let f = tape.slice(gates, 1, h, 2 * h)?;
            let f = tape.sigmoid(f)?;
            let g = tape.slice(gates, 1, 2 * h, 3 * h)?;
            let g = tape.tanh(g)?;
            let o = tape.slice(gates, 1, 3 * h, 4 * h)?;
            let o = tape.sigmoid(o)?;

            let mut cell = tape.mul(i, g)?;
            if let Some((_, prev_cell)) = state {
                let kept = tape.mul(f, prev_cell)?;
                cell = tape.add(kept, cell)?;
            }
            let squashed = tape.tanh(cell)?;
            let hidden = tape.mul(o, squashed)?;
            state = Some((hidden, cell));
            outputs.push(tape.reshape(hidden, &[batch, 1, h])?);
        }
        let stacked = tape.concat(&outputs, 1)?;
        if shape.len() == 2 {
            tape.reshape(stacked, &[steps, h])
        } else {
            Ok(stacked)
        }
    }
}
