use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rational_attention::data::{generate_dataset, split, Episode, ScenarioConfig, CHANNELS, HOURS};
use rational_attention::model::ModelKind;
use rational_attention::params::ParamStore;
use rational_attention::train::{
    adam_step, build_baseline, score_episodes, train, AdamState, Checkpoint, EvalMask, ModelConfig, TrainError,
    TrainTrace,
};
use rational_attention::Tensor;

fn small_config(seed: u64, epochs: usize) -> ModelConfig {
    ModelConfig {
        seed,
        epochs,
        lstm_hidden: 12,
        residual_width: 10,
        d_k: 4,
        generator_hidden: 6,
        learning_rate: 1e-3,
        ..Default::default()
    }
}

fn small_data() -> (Vec<Episode>, Vec<Episode>) {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 48,
        ..Default::default()
    })
    .unwrap();
    split(&data, 0.67, 0).unwrap()
}

#[test]
fn zero_epochs_returns_initial_weights() {
    let (tr, te) = small_data();
    let cfg = small_config(0, 0);
    let out = train(ModelKind::Proposed, &cfg, &tr, &te).unwrap();
    assert!(out.trace.is_empty());
    let fresh = rational_attention::model::Model::new(ModelKind::Proposed, &cfg).unwrap();
    assert_eq!(&out.final_checkpoint.params, fresh.params());
    assert_eq!(out.final_checkpoint.epoch, 0);
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let (tr, te) = small_data();
    for kind in ModelKind::ALL {
        let cfg = ModelConfig {
            learning_rate: 0.0,
            ..small_config(1, 1)
        };
        let out = train(kind, &cfg, &tr, &te).unwrap();
        let fresh = rational_attention::model::Model::new(kind, &cfg).unwrap();
        assert_eq!(&out.final_checkpoint.params, fresh.params(), "{kind}");
        assert_eq!(out.trace.len(), 1);
    }
}

#[test]
fn same_seed_reproduces_the_trace() {
    let (tr, te) = small_data();
    let cfg = small_config(2, 2);
    let a = train(ModelKind::Proposed, &cfg, &tr, &te).unwrap();
    let b = train(ModelKind::Proposed, &cfg, &tr, &te).unwrap();
    assert_eq!(a.final_checkpoint, b.final_checkpoint);
    let csv = |t: &TrainTrace| {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a.trace), csv(&b.trace));
    assert_eq!(a.trace.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2]);
    let c = train(ModelKind::Proposed, &small_config(3, 2), &tr, &te).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn trace_round_trips_through_csv() {
    let (tr, te) = small_data();
    let out = train(ModelKind::Lr, &small_config(4, 3), &tr, &te).unwrap();
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("epoch,total_loss,focal_loss,sparsity_loss,selection_rate"));
    assert_eq!(TrainTrace::read_csv(buf.as_slice()).unwrap(), out.trace);
}

#[test]
fn logistic_regression_separates_two_episodes() {
    let mut hot = vec![0.0; HOURS * CHANNELS];
    hot[0] = 20.0;
    let toy = vec![
        Episode::new("neg", vec![0.0; HOURS * CHANNELS], 0),
        Episode::new("pos", hot, 1),
    ];
    let cfg = ModelConfig {
        learning_rate: 0.05,
        batch_size: 2,
        ..small_config(5, 40)
    };
    let out = train(ModelKind::Lr, &cfg, &toy, &toy).unwrap();
    let model = out.final_checkpoint.model().unwrap();
    let (scores, _) = score_episodes(&model, &toy, EvalMask::Threshold, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(scores.scores()[0] < 0.5 && scores.scores()[1] > 0.5, "{:?}", scores.scores());
}

#[test]
fn nn_baseline_parameter_count() {
    let nn = build_baseline(ModelKind::Nn, &ModelConfig::default()).unwrap();
    assert_eq!(nn.params().count(), 192 * 200 + 200 + 200 * 2 + 2);
    assert_eq!(nn.params().count(), 39_002);
    assert!(build_baseline(ModelKind::Proposed, &ModelConfig::default()).is_err());
}

#[test]
fn checkpoint_round_trip_restores_predictions() {
    let (tr, te) = small_data();
    let out = train(ModelKind::Proposed, &small_config(6, 1), &tr, &te).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt.json");
    out.final_checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.final_checkpoint);
    let score = |c: &Checkpoint| {
        let (s, _) = score_episodes(&c.model().unwrap(), &te, EvalMask::Threshold, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.scores().to_vec()
    };
    assert_eq!(score(&loaded), score(&out.final_checkpoint));
    assert_eq!(loaded.rng.restore(), out.final_checkpoint.rng.restore());

    std::fs::write(&path, "{\"version\": 1}").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn divergence_reports_location_and_keeps_last_good_weights() {
    let (mut tr, te) = small_data();
    let cfg = ModelConfig {
        log_counts: false,
        batch_size: 64,
        ..small_config(7, 2)
    };
    tr[5].matrix.fill(f64::MAX);
    let err = train(ModelKind::Nn, &cfg, &tr, &te).unwrap_err();
    match err {
        TrainError::Diverged {
            epoch,
            batch,
            sample,
            last_good,
            trace,
            ..
        } => {
            assert_eq!((epoch, batch), (1, 0));
            assert_eq!(sample, Some(5));
            assert!(trace.is_empty());
            assert!(last_good.params.tensors().iter().all(|t| t.data().iter().all(|v| v.is_finite())));
        }
        other => panic!("expected divergence, got {other}"),
    }
}

#[test]
fn empty_split_is_rejected() {
    let (tr, _) = small_data();
    assert!(matches!(
        train(ModelKind::Lr, &small_config(0, 1), &tr, &[]),
        Err(TrainError::EmptySplit("test"))
    ));
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut p = ParamStore::new();
    p.add("w", Tensor::new(vec![1], vec![0.5]).unwrap());
    let mut state = AdamState::new(&p);
    adam_step(&mut p, &[vec![1.0]], &mut state, 0.001);
    let w = p.tensors()[0].data()[0];
    assert!((w - (0.5 - 0.001)).abs() < 1e-10, "{w}");
    let before = p.clone();
    let mut fresh = AdamState::new(&p);
    adam_step(&mut p, &[vec![0.0]], &mut fresh, 0.001);
    assert_eq!(p, before);
}
