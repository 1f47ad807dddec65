use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::network::{prepare_inputs, MaskPolicy, Model};
use crate::model::objective::focal_on_tape;
use crate::model::{Generator, RationaleMask};
use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};
use crate::train::{adam_step, AdamState, Estimator, EvalMask};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value in batch sample {sample:?}")]
    NonFinite {
        sample: Option<usize>,
        source: TensorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Exponential moving average of the per-sample loss, subtracted from the
/// loss before it weights `∇ log p(z|x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBaseline {
    pub decay: f64,
    pub value: Option<f64>,
}

impl RewardBaseline {
    pub fn new(decay: f64) -> Self {
        Self { decay, value: None }
    }

    /// Value to subtract for the current batch; the first batch uses its own mean.
    pub fn reference(&self, batch_mean: f64) -> f64 {
        self.value.unwrap_or(batch_mean)
    }

    pub fn update(&mut self, batch_mean: f64) {
        self.value = Some(match self.value {
            None => batch_mean,
            Some(b) => self.decay * b + (1.0 - self.decay) * batch_mean,
        });
    }
}

/// Builds `Σ_i (L_i - b) · log p(z_i|x_i) / B` on the tape. Its gradient
/// with respect to the generator parameters is the score-function estimate
/// of `∇ E[L]`.
pub fn score_function_surrogate(tape: &mut Tape, log_prob: Var, losses: &[f64], baseline: f64) -> crate::tensor::Result<Var> {
    let n = losses.len() as f64;
    let advantage: Vec<f64> = losses.iter().map(|l| (l - baseline) / n).collect();
    let adv = tape.constant(Tensor::new(vec![losses.len()], advantage)?);
    let weighted = tape.mul(adv, log_prob)?;
    tape.sum(weighted)
}

/// Batch means of the objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub focal: f64,
    pub sparsity: f64,
    pub total: f64,
    /// Baseline used for this step's advantages (0 when there is no generator).
    pub baseline: f64,
    /// Mean fraction of selected timesteps (1 without a generator).
    pub selection_rate: f64,
    /// Mean generator probability, i.e. the expected selection rate.
    pub expected_selection_rate: f64,
}

/// One optimisation step on a batch of `[T × F]` count matrices.
///
/// The classifier receives pathwise gradients of the focal loss. With the
/// score-function estimator, generator parameters receive
/// `(L - b) ∇ log p(z|x)` where `L` is focal plus sparsity loss and `b` the
/// moving-average baseline; one mask sample per example.
pub fn training_step(
    model: &mut Model,
    matrices: &[&[f64]],
    labels: &[f64],
    optimizer: &mut AdamState,
    baseline: &mut RewardBaseline,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown, StepError> {
    if matrices.is_empty() {
        return Err(StepError::EmptyBatch);
    }
    assert_eq!(matrices.len(), labels.len());
    let cfg = model.config().clone();
    let steps = matrices[0].len() / model.features();
    let inputs = prepare_inputs(matrices.iter().copied(), steps, model.features(), cfg.log_counts)?;
    let batch = labels.len();
    let (alpha, beta) = model.focal_params();

    let mut tape = Tape::new();
    let params = model.params().bind(&mut tape, true);
    let recorded = (|| {
        let pass = model.forward(&mut tape, &params, &inputs, MaskPolicy::Sample, rng)?;
        let per_sample = focal_on_tape(&mut tape, pass.class_probs, labels, alpha, beta)?;
        let objective = tape.mean(per_sample)?;
        Ok::<_, TensorError>((pass, per_sample, objective))
    })();
    let (pass, per_sample, mut objective) = match recorded {
        Ok(r) => r,
        Err(e @ TensorError::NonFinite { .. }) => {
            return Err(StepError::NonFinite {
                sample: locate_non_finite(model, &inputs),
                source: e,
            })
        }
        Err(e) => return Err(e.into()),
    };

    let focal: Vec<f64> = tape.value(per_sample).data().to_vec();
    let masks = pass.masks.clone();
    let sparsity: Vec<f64> = match &masks {
        Some(m) => m.iter().map(|m| cfg.lambda_sparsity * m.selected() as f64).collect(),
        None => vec![0.0; batch],
    };
    let totals: Vec<f64> = focal.iter().zip(&sparsity).map(|(a, b)| a + b).collect();
    if let Some(i) = totals.iter().position(|v| !v.is_finite()) {
        return Err(StepError::NonFinite {
            sample: Some(i),
            source: TensorError::NonFinite { op: "loss" },
        });
    }
    let mean_total = totals.iter().sum::<f64>() / batch as f64;

    let mut used_baseline = 0.0;
    if let (Some(masks), Some(probs)) = (&masks, pass.mask_probs) {
        match cfg.estimator {
            Estimator::Reinforce => {
                used_baseline = baseline.reference(mean_total);
                let z: Vec<f64> = masks.iter().flat_map(|m| m.z.iter().map(|&v| f64::from(v))).collect();
                let log_prob = Generator::log_prob(&mut tape, probs, &z)?;
                let surrogate = score_function_surrogate(&mut tape, log_prob, &totals, used_baseline)?;
                objective = tape.add(objective, surrogate)?;
                baseline.update(mean_total);
            }
            Estimator::StraightThrough => {
                if let Some(relaxed) = pass.relaxed_mask {
                    let count = tape.sum(relaxed)?;
                    let penalty = tape.scale(count, cfg.lambda_sparsity / batch as f64)?;
                    objective = tape.add(objective, penalty)?;
                }
            }
        }
    }

    tape.backward(objective).map_err(|e| StepError::NonFinite {
        sample: None,
        source: e,
    })?;
    let grads = model.params().gradients(&tape, &params);
    adam_step(model.params_mut(), &grads, optimizer, cfg.learning_rate);

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (selection_rate, expected_selection_rate) = match &masks {
        Some(m) => (
            mean(&m.iter().map(|m| m.selection_rate).collect::<Vec<_>>()),
            mean(&m.iter().map(|m| mean(&m.probs)).collect::<Vec<_>>()),
        ),
        None => (1.0, 1.0),
    };
    let focal_mean = mean(&focal);
    let sparsity_mean = mean(&sparsity);
    Ok(LossBreakdown {
        focal: focal_mean,
        sparsity: sparsity_mean,
        total: focal_mean + sparsity_mean,
        baseline: used_baseline,
        selection_rate,
        expected_selection_rate,
    })
}

/// Re-runs each sample alone to find the first one whose forward pass is
/// not finite.
fn locate_non_finite(model: &Model, inputs: &Tensor) -> Option<usize> {
    use rand::SeedableRng;
    let shape = inputs.shape();
    let per = shape[1] * shape[2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..shape[0]).find(|&i| {
        let one = Tensor::new(vec![1, shape[1], shape[2]], inputs.data()[i * per..(i + 1) * per].to_vec())
            .expect("sample shape");
        let mut tape = Tape::new();
        let params = model.params().bind(&mut tape, false);
        model.forward(&mut tape, &params, &one, MaskPolicy::Threshold, &mut rng).is_err()
    })
}

/// Scores produced by [`predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub prob_positive: Vec<f64>,
    pub masks: Option<Vec<RationaleMask>>,
    /// One `T × T` attention matrix per episode.
    pub attention: Option<Vec<Tensor>>,
    /// Model inputs after preprocessing, before positional encoding.
    pub inputs: Tensor,
}

/// Scores `matrices` without recording gradients, in chunks of `chunk`.
pub fn predict(
    model: &Model,
    matrices: &[&[f64]],
    mode: EvalMask,
    chunk: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Predictions, StepError> {
    if matrices.is_empty() {
        return Err(StepError::EmptyBatch);
    }
    let features = model.features();
    let steps = matrices[0].len() / features;
    let inputs = prepare_inputs(matrices.iter().copied(), steps, features, model.config().log_counts)?;
    let mut prob_positive = Vec::with_capacity(matrices.len());
    let mut masks = model.has_generator().then(Vec::new);
    let mut attention = model.has_attention().then(Vec::new);
    let per = steps * features;
    for start in (0..matrices.len()).step_by(chunk.max(1)) {
        let end = (start + chunk.max(1)).min(matrices.len());
        let part = Tensor::new(vec![end - start, steps, features], inputs.data()[start * per..end * per].to_vec())?;
        let mut tape = Tape::new();
        let params = model.params().bind(&mut tape, false);
        let pass = model.forward(&mut tape, &params, &part, mode.into(), rng)?;
        prob_positive.extend(tape.value(pass.class_probs).data().chunks(2).map(|c| c[1]));
        if let (Some(all), Some(m)) = (masks.as_mut(), pass.masks) {
            all.extend(m);
        }
        if let (Some(all), Some(a)) = (attention.as_mut(), pass.attention) {
            all.extend(
                tape.value(a)
                    .data()
                    .chunks(steps * steps)
                    .map(|c| Tensor::new(vec![steps, steps], c.to_vec()).expect("attention shape")),
            );
        }
    }
    Ok(Predictions {
        prob_positive,
        masks,
        attention,
        inputs,
    })
}
