use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{Episode, CHANNELS};
use crate::eval::{auc_pr, auc_roc, ScoredSet};
use crate::model::{predict, training_step, Model, ModelKind, RewardBaseline, StepError};
use crate::train::{AdamState, Checkpoint, ConfigError, EpochRecord, EvalMask, ModelConfig, TrainTrace};

/// RNG stream used for evaluation-time mask sampling.
pub const EVAL_STREAM: u64 = 2;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}, batch {batch} (sample {sample:?}): {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        sample: Option<usize>,
        message: String,
        /// Weights before the failing step.
        last_good: Box<Checkpoint>,
        trace: TrainTrace,
    },
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    /// Checkpoint with the highest test AUC-ROC (the initial weights if no
    /// epoch produced a defined AUC).
    pub best_checkpoint: Checkpoint,
    pub trace: TrainTrace,
}

/// Builds one of the comparison models. The proposed model is not a baseline.
pub fn build_baseline(kind: ModelKind, config: &ModelConfig) -> Result<Model, ConfigError> {
    match kind {
        ModelKind::Proposed => Err(ConfigError::Invalid("proposed is not a baseline; expected lr, nn or lstm".into())),
        _ => Model::new(kind, config),
    }
}

pub fn train(kind: ModelKind, config: &ModelConfig, train_set: &[Episode], test_set: &[Episode]) -> Result<TrainOutcome, TrainError> {
    train_with_progress(Model::new(kind, config)?, train_set, test_set, |_| {})
}

/// Scores episodes and returns the scored set with the mean evaluation selection rate.
pub fn score_episodes(model: &Model, episodes: &[Episode], mode: EvalMask, rng: &mut ChaCha8Rng) -> Result<(ScoredSet, f64), StepError> {
    let matrices: Vec<&[f64]> = episodes.iter().map(|e| e.matrix.as_slice()).collect();
    let preds = predict(model, &matrices, mode, EVAL_CHUNK, rng)?;
    let rate = match &preds.masks {
        Some(m) => m.iter().map(|m| m.selection_rate).sum::<f64>() / m.len() as f64,
        None => 1.0,
    };
    let labels = episodes.iter().map(|e| e.label).collect();
    let set = ScoredSet::new(preds.prob_positive, labels).map_err(|_| StepError::NonFinite {
        sample: None,
        source: crate::TensorError::NonFinite { op: "score" },
    })?;
    Ok((set, rate))
}

fn aucs(set: &ScoredSet) -> (f64, f64) {
    (auc_roc(set).unwrap_or(f64::NAN), auc_pr(set).unwrap_or(f64::NAN))
}

/// Trains `model` from its current weights, calling `progress` after every epoch.
pub fn train_with_progress(
    mut model: Model,
    train_set: &[Episode],
    test_set: &[Episode],
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if test_set.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    if model.features() != CHANNELS {
        return Err(ConfigError::Invalid(format!("d_model is {} but episodes have {CHANNELS} channels", model.features())).into());
    }
    let cfg = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = AdamState::new(model.params());
    let mut baseline = RewardBaseline::new(cfg.baseline_decay);
    let mut trace = TrainTrace::default();
    let mut best = Checkpoint::capture(&model, 0, &optimizer, &baseline, &rng);
    let mut best_auc = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let matrices: Vec<&[f64]> = idx.iter().map(|&i| train_set[i].matrix.as_slice()).collect();
            let labels: Vec<f64> = idx.iter().map(|&i| f64::from(train_set[i].label)).collect();
            let step = match training_step(&mut model, &matrices, &labels, &mut optimizer, &mut baseline, &mut rng) {
                Ok(s) => s,
                Err(StepError::NonFinite { sample, source }) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        batch,
                        sample: sample.map(|s| idx[s]),
                        message: source.to_string(),
                        last_good: Box::new(Checkpoint::capture(&model, epoch - 1, &optimizer, &baseline, &rng)),
                        trace,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let w = idx.len() as f64;
            for (s, v) in sums.iter_mut().zip([
                step.total,
                step.focal,
                step.sparsity,
                step.selection_rate,
                step.expected_selection_rate,
            ]) {
                *s += w * v;
            }
        }
        let n = train_set.len() as f64;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        eval_rng.set_stream(EVAL_STREAM);
        let (train_scores, _) = score_episodes(&model, train_set, cfg.eval_mask, &mut eval_rng)?;
        let (test_scores, test_rate) = score_episodes(&model, test_set, cfg.eval_mask, &mut eval_rng)?;
        let (train_auc_roc, train_auc_pr) = aucs(&train_scores);
        let (test_auc_roc, test_auc_pr) = aucs(&test_scores);
        let record = EpochRecord {
            epoch,
            total_loss: sums[0] / n,
            focal_loss: sums[1] / n,
            sparsity_loss: sums[2] / n,
            selection_rate: sums[3] / n,
            expected_selection_rate: sums[4] / n,
            test_selection_rate: test_rate,
            train_auc_roc,
            train_auc_pr,
            test_auc_roc,
            test_auc_pr,
        };
        progress(&record);
        trace.records.push(record);
        if test_auc_roc > best_auc {
            best_auc = test_auc_roc;
            best = Checkpoint::capture(&model, epoch, &optimizer, &baseline, &rng);
        }
    }
    Ok(TrainOutcome {
        final_checkpoint: Checkpoint::capture(&model, cfg.epochs, &optimizer, &baseline, &rng),
        best_checkpoint: best,
        trace,
    })
}
