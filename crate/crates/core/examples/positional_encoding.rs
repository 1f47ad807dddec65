//! Print the sinusoidal position table and add it to a zero sequence on the tape.

use rational_attention::layers::PositionalEncodingTable;
use rational_attention::{Tape, Tensor};

fn main() -> Result<(), rational_attention::TensorError> {
    let pe = PositionalEncodingTable::new(24, 8);
    for hour in [0, 1, 6, 12, 23] {
        let row: Vec<String> = (0..8).map(|c| format!("{:+.3}", pe.table().at(&[hour, c]))).collect();
        println!("hour {hour:>2}: {}", row.join(" "));
    }

    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 24, 8]));
    let y = pe.encode(&mut tape, x)?;
    assert_eq!(tape.value(y).data(), pe.table().data());
    println!("zero input + encoding reproduces the table");
    Ok(())
}
