use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational_attention::gradcheck;
use rational_attention::{Tape, Tensor, TensorError};

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(m in 1usize..9, k in 1usize..9, n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random(&mut rng, m * k), random(&mut rng, k * n));
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::new(vec![m, k], a.clone()).unwrap());
        let bv = tape.constant(Tensor::new(vec![k, n], b.clone()).unwrap());
        let c = tape.matmul(av, bv).unwrap();
        for (x, y) in tape.value(c).data().iter().zip(naive_matmul(&a, &b, m, k, n)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_matmul_matches_per_item(batch in 1usize..4, m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random(&mut rng, batch * m * k), random(&mut rng, batch * k * n));
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::new(vec![batch, m, k], a.clone()).unwrap());
        let bv = tape.constant(Tensor::new(vec![batch, k, n], b.clone()).unwrap());
        let c = tape.matmul(av, bv).unwrap();
        for i in 0..batch {
            let expect = naive_matmul(&a[i * m * k..(i + 1) * m * k], &b[i * k * n..(i + 1) * k * n], m, k, n);
            for (x, y) in tape.value(c).data()[i * m * n..(i + 1) * m * n].iter().zip(expect) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_match_wide_accumulation(len in 1usize..12, shift in -500.0f64..500.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-30.0..30.0) + shift).collect();
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::new(vec![1, len], x.clone()).unwrap());
        let s = tape.softmax(v, 1).unwrap();
        // oracle: subtract max, sum in ascending order with compensated summation
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let mut sorted = e.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for v in sorted {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        for v in &mut e {
            *v /= sum;
        }
        let got = tape.value(s).data();
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (g, o) in got.iter().zip(&e) {
            prop_assert!((g - o).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_gradients_match_finite_differences(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::new(vec![m, k], random(&mut rng, m * k)).unwrap();
        let b = Tensor::new(vec![k, n], random(&mut rng, k * n)).unwrap();
        let w = Tensor::new(vec![m, n], random(&mut rng, m * n)).unwrap();
        let report = gradcheck::check(&[a, b], 1e-5, |t, v| {
            let c = t.matmul(v[0], v[1])?;
            gradcheck::project(t, c, &w)
        }).unwrap();
        prop_assert!(report.passes(1e-6), "{:?}", report);
    }
}

#[test]
fn elementwise_and_reduction_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::new(vec![3, 4], (0..12).map(|_| rng.gen_range(0.2..1.5)).collect()).unwrap();
    let y = Tensor::new(vec![3, 4], random(&mut rng, 12)).unwrap();
    let report = gradcheck::check(&[x, y], 1e-5, |t, v| {
        let a = t.mul(v[0], v[1])?;
        let b = t.log(v[0])?;
        let c = t.sigmoid(v[1])?;
        let d = t.tanh(a)?;
        let e = t.exp(c)?;
        let f = t.powf(v[0], 2.0)?;
        let s = t.add(d, e)?;
        let s = t.sub(s, b)?;
        let s = t.add(s, f)?;
        let m = t.mean_axis(s, 0)?;
        let sm = t.softmax(s, 1)?;
        let tot = t.sum(sm)?;
        let tot2 = t.sum(m)?;
        t.add(tot, tot2)
    })
    .unwrap();
    assert!(report.passes(1e-6), "{report:?}");
}

#[test]
fn structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::new(vec![2, 3, 4], random(&mut rng, 24)).unwrap();
    let w = Tensor::new(vec![2, 5, 3], random(&mut rng, 30)).unwrap();
    let report = gradcheck::check(&[x], 1e-5, |t, v| {
        let tr = t.transpose(v[0])?;
        let a = t.slice(tr, 1, 1, 3)?;
        let b = t.slice(tr, 1, 0, 3)?;
        let c = t.concat(&[a, b], 1)?;
        let s = t.sum_axis(v[0], 2)?;
        let e = t.expand(s, 1, 5)?;
        let out = t.mul(c, e)?;
        gradcheck::project(t, out, &w)
    })
    .unwrap();
    assert!(report.passes(1e-6), "{report:?}");
}

#[test]
fn layer_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::new(vec![3, 6], random(&mut rng, 18)).unwrap();
    let g = Tensor::new(vec![6], random(&mut rng, 6)).unwrap();
    let b = Tensor::new(vec![6], random(&mut rng, 6)).unwrap();
    let w = Tensor::new(vec![3, 6], random(&mut rng, 18)).unwrap();
    let report = gradcheck::check(&[x, g, b], 1e-5, |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
        gradcheck::project(t, y, &w)
    })
    .unwrap();
    assert!(report.passes(1e-6), "{report:?}");
}

#[test]
fn broadcasting_ops_follow_trailing_dims() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![2], vec![10.0, 20.0]).unwrap());
    let y = tape.add_broadcast(x, b).unwrap();
    assert_eq!(tape.value(y).data(), &[11.0, 22.0, 13.0, 24.0]);
    let z = tape.mul_broadcast(x, b).unwrap();
    assert_eq!(tape.value(z).data(), &[10.0, 40.0, 30.0, 80.0]);
    let bad = tape.constant(Tensor::zeros(&[3]));
    assert!(matches!(tape.add_broadcast(x, bad), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn mismatched_matmul_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[4, 2]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}
