use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational_attention::gradcheck;
use rational_attention::layers::{PositionalEncodingTable, ResidualBlock, SelfAttention, LAYER_NORM_EPS};
use rational_attention::params::{Binding, ParamStore};
use rational_attention::{Tape, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Plain-loop evaluation of `LN(x + softmax(QKᵀ/√dk) V W_out)` for one sequence.
fn attention_oracle(store: &ParamStore, x: &[f64], t: usize, d: usize, dk: usize) -> (Vec<f64>, Vec<f64>) {
    let w = |name: &str| store.by_name(&format!("att.{name}")).unwrap().data().to_vec();
    let (wq, wk, wv, wo) = (w("w_query"), w("w_key"), w("w_value"), w("w_out"));
    let (gain, bias) = (w("norm.gain"), w("norm.bias"));
    let proj = |m: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; t * dk];
        for i in 0..t {
            for j in 0..dk {
                out[i * dk + j] = (0..d).map(|c| x[i * d + c] * m[c * dk + j]).sum();
            }
        }
        out
    };
    let (q, k, v) = (proj(&wq), proj(&wk), proj(&wv));
    let mut a = vec![0.0; t * t];
    for i in 0..t {
        let s: Vec<f64> = (0..t)
            .map(|j| (0..dk).map(|c| q[i * dk + c] * k[j * dk + c]).sum::<f64>() / (dk as f64).sqrt())
            .collect();
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|v| (v - max).exp()).sum();
        for j in 0..t {
            a[i * t + j] = (s[j] - max).exp() / z;
        }
    }
    let mut out = vec![0.0; t * d];
    for i in 0..t {
        let ctx: Vec<f64> = (0..dk).map(|c| (0..t).map(|j| a[i * t + j] * v[j * dk + c]).sum()).collect();
        let row: Vec<f64> = (0..d)
            .map(|o| x[i * d + o] + (0..dk).map(|c| ctx[c] * wo[c * d + o]).sum::<f64>())
            .collect();
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / d as f64;
        for o in 0..d {
            out[i * d + o] = gain[o] * (row[o] - mean) / (var + LAYER_NORM_EPS).sqrt() + bias[o];
        }
    }
    (out, a)
}

fn build_attention(seed: u64, d: usize, dk: usize) -> (ParamStore, SelfAttention) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let att = SelfAttention::new(&mut store, &mut rng, "att", d, dk);
    // move the norm away from identity so the oracle checks gain and bias use
    for (name, t) in ["att.norm.gain", "att.norm.bias"].iter().zip([1.0, 0.0]) {
        let id = store.id(name).unwrap();
        for v in store.get_mut(id).data_mut() {
            *v = t + rng.gen_range(-0.5..0.5);
        }
    }
    (store, att)
}

#[test]
fn attention_matches_loop_oracle() {
    for seed in 0..5 {
        let (t, d, dk) = (6, 5, 3);
        let (store, att) = build_attention(seed, d, dk);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&mut rng, &[t, d]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = att.forward_single(&mut tape, &b, xv).unwrap();
        let (expect, weights) = attention_oracle(&store, x.data(), t, d, dk);
        for (g, e) in tape.value(out.output).data().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
        for (g, e) in tape.value(out.weights).data().iter().zip(&weights) {
            assert!((g - e).abs() < 1e-14);
        }
    }
}

#[test]
fn single_timestep_attends_to_itself() {
    let (store, att) = build_attention(1, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape, false);
    let x = tape.constant(random(&mut rng, &[1, 4]));
    let out = att.forward_single(&mut tape, &b, x).unwrap();
    assert_eq!(tape.value(out.weights).data(), &[1.0]);
}

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let d = x.shape()[1];
    let data = perm.iter().flat_map(|&p| x.data()[p * d..(p + 1) * d].to_vec()).collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

#[test]
fn attention_is_permutation_covariant_without_positions() {
    let (t, d) = (7, 6);
    let (store, att) = build_attention(3, d, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[t, d]);
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let run = |x: Tensor| {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let xv = tape.constant(x);
        let out = att.forward_single(&mut tape, &b, xv).unwrap();
        tape.value(out.output).clone()
    };
    let permuted_after = permute_rows(&run(x.clone()), &perm);
    let permuted_before = run(permute_rows(&x, &perm));
    for (a, b) in permuted_after.data().iter().zip(permuted_before.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn positional_encoding_breaks_permutation_covariance() {
    let (t, d) = (7, 6);
    let (store, att) = build_attention(3, d, 4);
    let pe = PositionalEncodingTable::new(24, d);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[t, d]);
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let run = |x: Tensor| {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let xv = tape.constant(x);
        let encoded = pe.encode(&mut tape, xv).unwrap();
        let out = att.forward_single(&mut tape, &b, encoded).unwrap();
        tape.value(out.output).clone()
    };
    let permuted_after = permute_rows(&run(x.clone()), &perm);
    let permuted_before = run(permute_rows(&x, &perm));
    let gap = permuted_after
        .data()
        .iter()
        .zip(permuted_before.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-3, "gap {gap}");
}

#[test]
fn masked_keys_receive_no_attention() {
    let (store, att) = build_attention(5, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape, false);
    let x = tape.constant(random(&mut rng, &[2, 5, 4]));
    let mask = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let out = att.forward(&mut tape, &b, x, Some(&mask)).unwrap();
    let w = tape.value(out.weights).data();
    for i in 0..5 {
        let row = &w[i * 5..(i + 1) * 5];
        assert_eq!(row[1], 0.0);
        assert_eq!(row[4], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // second sequence has every key masked and attends uniformly
        let row = &w[25 + i * 5..25 + (i + 1) * 5];
        assert!(row.iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }
}

#[test]
fn attention_and_residual_gradients_match_finite_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let att = SelfAttention::new(&mut store, &mut rng, "att", 4, 3);
        let res = ResidualBlock::new(&mut store, &mut rng, "res", 4, 5);
        let x = random(&mut rng, &[2, 3, 4]);
        let w = random(&mut rng, &[2, 3, 4]);
        let mut inputs = vec![x];
        inputs.extend(store.tensors().iter().cloned());
        let report = gradcheck::check(&inputs, 1e-5, |tape, vars| {
            let binding = Binding::from_vars(vars[1..].to_vec());
            let h = att.forward(tape, &binding, vars[0], Some(&[1.0, 1.0, 0.0, 1.0, 0.0, 1.0]))?;
            let y = res.forward(tape, &binding, h.output)?;
            gradcheck::project(tape, y, &w)
        })
        .unwrap();
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}
