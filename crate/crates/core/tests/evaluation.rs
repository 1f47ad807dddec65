mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational_attention::data::{generate_dataset, split, ScenarioConfig, SensorChannel, HOURS};
use rational_attention::eval::{
    auc_pr, auc_roc, evaluate, explain, mean_attribution, pr_points, roc_points, run_ablation, write_heatmaps_csv,
    ExplainError, MetricError, ScoredSet,
};
use rational_attention::model::{MaskMode, Model, ModelKind};
use rational_attention::train::{EvalMask, ModelConfig};
use rational_attention::Tensor;

fn set(scores: Vec<f64>, labels: Vec<u8>) -> ScoredSet {
    ScoredSet::new(scores, labels).unwrap()
}

fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=100).prop_flat_map(|n| {
        (
            // coarse grid so ties are common
            prop::collection::vec((0u32..20).prop_map(|v| v as f64 / 20.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auc_roc_matches_pairwise_oracle((scores, labels) in scored_set()) {
        let s = set(scores.clone(), labels.clone());
        match auc_roc(&s) {
            Ok(a) => prop_assert!((a - common::pairwise_auc(&scores, &labels)).abs() < 1e-12),
            Err(e) => prop_assert!(s.positives() == 0 || s.negatives() == 0, "{e}"),
        }
    }

    #[test]
    fn auc_pr_matches_swept_oracle((scores, labels) in scored_set()) {
        let s = set(scores.clone(), labels.clone());
        match auc_pr(&s) {
            Ok(a) => prop_assert!((a - common::swept_pr_area(&scores, &labels)).abs() < 1e-12),
            Err(_) => prop_assert_eq!(s.positives(), 0),
        }
    }

    #[test]
    fn auc_roc_ignores_monotone_transforms((scores, labels) in scored_set()) {
        let s = set(scores.clone(), labels.clone());
        prop_assume!(s.positives() > 0 && s.negatives() > 0);
        let cubed = set(scores.iter().map(|v| v.powi(3)).collect(), labels);
        prop_assert_eq!(auc_roc(&s).unwrap(), auc_roc(&cubed).unwrap());
    }

    #[test]
    fn flipping_labels_or_ranking_complements_auc(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let s = set(scores.clone(), labels.clone());
        prop_assume!(s.positives() > 0 && s.negatives() > 0);
        let a = auc_roc(&s).unwrap();
        let swapped = set(scores.clone(), labels.iter().map(|l| 1 - l).collect());
        prop_assert!((a + auc_roc(&swapped).unwrap() - 1.0).abs() < 1e-12);
        let reversed = set(scores.iter().map(|v| -v).collect(), labels.clone());
        prop_assert!((a + auc_roc(&reversed).unwrap() - 1.0).abs() < 1e-12);
        // doing both cancels out
        let both = set(scores.iter().map(|v| -v).collect(), labels.iter().map(|l| 1 - l).collect());
        prop_assert!((a - auc_roc(&both).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn curves_are_well_formed((scores, labels) in scored_set()) {
        let s = set(scores, labels);
        prop_assume!(s.positives() > 0 && s.negatives() > 0);
        let roc = roc_points(&s).unwrap();
        prop_assert_eq!(roc[0], (0.0, 0.0));
        prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        prop_assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        let pr = pr_points(&s).unwrap();
        prop_assert_eq!(pr.last().unwrap().0, 1.0);
        for v in [auc_roc(&s).unwrap(), auc_pr(&s).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn hand_stepped_precision_recall_area() {
    let scores = vec![0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.4, 0.3, 0.2, 0.1];
    let labels = vec![1, 1, 0, 1, 0, 0, 1, 0, 0, 0];
    // recall steps of 1/4 at precisions 1, 1, 3/4, 4/7
    let expect = 93.0 / 112.0;
    assert!((auc_pr(&set(scores.clone(), labels.clone())).unwrap() - expect).abs() < 1e-15);
    // 20 of 24 positive/negative pairs are ordered correctly
    assert!((auc_roc(&set(scores, labels)).unwrap() - 20.0 / 24.0).abs() < 1e-15);
}

#[test]
fn random_scores_give_prevalence_as_pr_area() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let prevalence = 0.25;
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < prevalence)).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let area = auc_pr(&set(scores, labels)).unwrap();
    assert!((area - prevalence).abs() < 0.03, "{area}");
}

#[test]
fn degenerate_inputs_are_errors() {
    assert_eq!(ScoredSet::new(vec![0.1], vec![]), Err(MetricError::LengthMismatch { scores: 1, labels: 0 }));
    assert_eq!(ScoredSet::new(vec![0.1], vec![3]), Err(MetricError::BadLabel(3)));
    assert_eq!(ScoredSet::new(vec![f64::NAN], vec![1]), Err(MetricError::NonFinite));
    assert!(matches!(auc_roc(&set(vec![0.2, 0.4], vec![1, 1])), Err(MetricError::Undefined(_))));
    assert!(matches!(auc_pr(&set(vec![0.2, 0.4], vec![0, 0])), Err(MetricError::Undefined(_))));
    assert_eq!(auc_roc(&set(vec![0.3; 4], vec![1, 0, 0, 1])).unwrap(), 0.5);
}

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

#[test]
fn explanations_are_consistent_with_the_model() {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 20,
        ..Default::default()
    })
    .unwrap();
    let model = Model::new(ModelKind::Proposed, &small_config(3, 0)).unwrap();
    let explanations = explain(&model, &data).unwrap();
    assert_eq!(explanations.len(), 20);
    for (ex, ep) in explanations.iter().zip(&data) {
        assert_eq!(ex.episode_id, ep.id);
        assert_eq!(ex.sensor_attribution.len(), 8);
        assert!(ex.sensor_attribution.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(ex.heatmap.iter().all(|v| v.is_finite() && *v >= 0.0));
        let k = ex.selected() as f64;
        assert!(ex.attention_received.iter().all(|&r| (0.0..=k + 1e-12).contains(&r)));
        let total: f64 = ex.attention_received.iter().sum();
        assert!((total - k).abs() < 1e-9, "attention mass {total} vs {k} selected");

        let x = Tensor::new(vec![HOURS, 8], ep.matrix.iter().map(|c| c.ln_1p()).collect()).unwrap();
        let encoded = model.encode(&x).unwrap();
        let mask = model
            .generate_mask(&encoded, MaskMode::Threshold, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(ex.mask, mask.z);
        let out = model.classify(&encoded, &mask).unwrap();
        assert!((ex.prob_positive - out.prob_positive).abs() < 1e-12);
    }

    let mut buf = Vec::new();
    write_heatmaps_csv(&mut buf, &explanations).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("episode_id,hour,selected,attention_received,bathroom,hallway"));
    assert_eq!(text.lines().count(), 1 + 20 * HOURS);
    assert!(mean_attribution(&explanations, SensorChannel::Bathroom, 1).is_some());

    let lstm = Model::new(ModelKind::Lstm, &small_config(3, 0)).unwrap();
    assert!(matches!(explain(&lstm, &data), Err(ExplainError::NotProposed(ModelKind::Lstm))));
}

#[test]
fn evaluation_report_is_self_consistent() {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 30,
        ..Default::default()
    })
    .unwrap();
    let model = Model::new(ModelKind::Proposed, &small_config(4, 0)).unwrap();
    let report = evaluate(&model, &data, EvalMask::Threshold).unwrap();
    let labels: Vec<u8> = report.scores.iter().map(|s| s.label).collect();
    let scores: Vec<f64> = report.scores.iter().map(|s| s.prob_positive).collect();
    assert_eq!(report.episodes, 30);
    assert_eq!(report.positives, labels.iter().filter(|&&l| l == 1).count());
    assert!((report.auc_roc - common::pairwise_auc(&scores, &labels)).abs() < 1e-12);
    assert!((report.auc_pr - common::swept_pr_area(&scores, &labels)).abs() < 1e-12);
    assert!(report.selection_rate_mean.is_some());
    let again = evaluate(&model, &data, EvalMask::Threshold).unwrap();
    assert_eq!(report, again);

    let nn = Model::new(ModelKind::Nn, &small_config(4, 0)).unwrap();
    assert_eq!(evaluate(&nn, &data, EvalMask::Threshold).unwrap().selection_rate_mean, None);
}

#[test]
fn ablation_has_six_arms_independent_of_jobs() {
    let data = generate_dataset(&ScenarioConfig {
        n_episodes: 40,
        ..Default::default()
    })
    .unwrap();
    let (tr, te) = split(&data, 0.67, 0).unwrap();
    let cfg = small_config(0, 1);
    let serial = run_ablation(&cfg, &[0, 1], &tr, &te, 1).unwrap();
    let parallel = run_ablation(&cfg, &[0, 1], &tr, &te, 4).unwrap();
    assert_eq!(serial, parallel);
    let names: Vec<&str> = serial.arms.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(
        names,
        ["full", "no_rational", "no_attention", "no_residual", "no_focal", "no_pe"]
    );
    assert!(serial.arms.iter().all(|a| a.runs.len() == 2 && a.runs.iter().all(|r| r.trace.len() == 1)));
    let mut buf = Vec::new();
    serial.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("variant,auc_roc,auc_pr,seeds\nfull,"));
}
