use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::eval::{auc_pr, auc_roc, pr_points, roc_points, Explanation, MetricError};
use crate::model::{Model, ModelKind, StepError};
use crate::train::{score_episodes, EvalMask, EVAL_STREAM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub id: String,
    pub label: u8,
    pub prob_positive: f64,
}

/// Metrics and curves for one model on one dataset. Serialised as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub episodes: usize,
    pub positives: usize,
    pub auc_roc: f64,
    pub auc_pr: f64,
    /// (false positive rate, true positive rate)
    pub roc_points: Vec<(f64, f64)>,
    /// (recall, precision)
    pub pr_points: Vec<(f64, f64)>,
    /// Mean fraction of timesteps selected by evaluation masks; absent for
    /// models without a generator.
    pub selection_rate_mean: Option<f64>,
    pub scores: Vec<EpisodeScore>,
    #[serde(default)]
    pub explanations: Vec<Explanation>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Scores `episodes` and computes both AUCs and their curves.
pub fn evaluate(model: &Model, episodes: &[Episode], mode: EvalMask) -> Result<EvaluationReport, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed);
    rng.set_stream(EVAL_STREAM);
    let (set, rate) = score_episodes(model, episodes, mode, &mut rng)?;
    Ok(EvaluationReport {
        model: model.kind(),
        episodes: set.len(),
        positives: set.positives(),
        auc_roc: auc_roc(&set)?,
        auc_pr: auc_pr(&set)?,
        roc_points: roc_points(&set)?,
        pr_points: pr_points(&set)?,
        selection_rate_mean: model.has_generator().then_some(rate),
        scores: episodes
            .iter()
            .zip(set.scores())
            .map(|(e, &p)| EpisodeScore {
                id: e.id.clone(),
                label: e.label,
                prob_positive: p,
            })
            .collect(),
        explanations: Vec::new(),
    })
}
