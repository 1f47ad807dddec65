//! Compare tape gradients of an LSTM and an attention block with central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational_attention::gradcheck;
use rational_attention::layers::{Lstm, SelfAttention};
use rational_attention::params::{Binding, ParamStore};
use rational_attention::Tensor;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let lstm = Lstm::new(&mut store, &mut rng, "lstm", 3, 4);
    let attn = SelfAttention::new(&mut store, &mut rng, "attn", 4, 2);
    let x = random(&mut rng, &[2, 5, 3]);
    let w = random(&mut rng, &[2, 5, 4]);
    let key_mask = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0];

    let mut inputs = vec![x];
    inputs.extend(store.tensors().iter().cloned());
    let report = gradcheck::check(&inputs, 1e-5, |tape, vars| {
        let b = Binding::from_vars(vars[1..].to_vec());
        let h = lstm.forward(tape, &b, vars[0])?;
        let out = attn.forward(tape, &b, h, Some(&key_mask))?;
        gradcheck::project(tape, out.output, &w)
    })
    .unwrap();
    println!(
        "{} entries checked, max relative error {:.2e}, max absolute error {:.2e}",
        report.checked, report.max_rel_error, report.max_abs_error
    );
    println!("passes at 1e-4: {}", report.passes(1e-4));
}
