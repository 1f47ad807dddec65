use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Precomputed sinusoidal encodings, `max_len × dim`.
///
/// Even columns hold `sin(pos / 10000^(2i/dim))` and odd columns the
/// matching cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncodingTable {
    table: Tensor,
}

impl PositionalEncodingTable {
    pub fn new(max_len: usize, dim: usize) -> Self {
        let mut data = vec![0.0; max_len * dim];
        for pos in 0..max_len {
            for col in 0..dim {
                data[pos * dim + col] = Self::entry(pos, col, dim);
            }
        }
        Self {
            table: Tensor::new(vec![max_len, dim], data).expect("table shape"),
        }
    }

    /// One table entry, evaluated directly.
    pub fn entry(pos: usize, col: usize, dim: usize) -> f64 {
        let pair = (col / 2 * 2) as f64;
        let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
        if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }

    pub fn max_len(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// First `len` rows.
    pub fn rows(&self, len: usize) -> Tensor {
        let dim = self.dim();
        Tensor::new(vec![len, dim], self.table.data()[..len * dim].to_vec()).expect("rows shape")
    }

    /// Adds the encoding to `x` of shape `[T, dim]` or `[batch, T, dim]`.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let rank = shape.len();
        if !(2..=3).contains(&rank) || shape[rank - 1] != self.dim() || shape[rank - 2] > self.max_len() {
            return Err(TensorError::ShapeMismatch {
                op: "positional_encode",
                left: shape,
                right: self.table.shape().to_vec(),
            });
        }
        let pe = tape.constant(self.rows(shape[rank - 2]));
        tape.add_broadcast(x, pe)
    }
}
