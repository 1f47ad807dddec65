//! Per-episode rationale explanations.
//!
//! For an episode with selected timesteps `S` (threshold-mode mask) and
//! attention matrix `A`, the attention a selected timestep `j` receives is
//! `r_j = Σ_{i∈S} A[i, j]`, so `0 ≤ r_j ≤ |S|`. Heatmap cell `(t, c)` is
//! `r_t · x[t, c]` for selected `t` and 0 elsewhere, where `x` is the model
//! input before positional encoding (log counts by default). The per-sensor
//! attribution is the heatmap's column sum divided by `|S|`. Without an
//! attention block every selected timestep receives weight 1.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Episode, SensorChannel, CHANNELS, HOURS};
use crate::model::{predict, Model, ModelKind, StepError};
use crate::train::{EvalMask, EVAL_STREAM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub episode_id: String,
    pub label: u8,
    pub prob_positive: f64,
    pub mask: Vec<u8>,
    pub probs: Vec<f64>,
    /// Attention received by each timestep from selected timesteps; 0 for
    /// unselected timesteps.
    pub attention_received: Vec<f64>,
    /// One value per sensor channel.
    pub sensor_attribution: Vec<f64>,
    /// `HOURS × CHANNELS`, row-major by hour.
    pub heatmap: Vec<f64>,
}

impl Explanation {
    pub fn selected(&self) -> usize {
        self.mask.iter().filter(|&&z| z == 1).count()
    }

    pub fn attribution(&self, channel: SensorChannel) -> f64 {
        self.sensor_attribution[channel.index()]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("explanations need the proposed model, got {0}")]
    NotProposed(ModelKind),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Explains each episode with the threshold-mode mask.
pub fn explain(model: &Model, episodes: &[Episode]) -> Result<Vec<Explanation>, ExplainError> {
    if model.kind() != ModelKind::Proposed {
        return Err(ExplainError::NotProposed(model.kind()));
    }
    if episodes.is_empty() {
        return Ok(Vec::new());
    }
    let matrices: Vec<&[f64]> = episodes.iter().map(|e| e.matrix.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed);
    rng.set_stream(EVAL_STREAM);
    let preds = predict(model, &matrices, EvalMask::Threshold, 64, &mut rng)?;
    let inputs = preds.inputs.data();
    let per = HOURS * CHANNELS;

    let out = episodes
        .iter()
        .enumerate()
        .map(|(e, episode)| {
            let (mask, probs) = match &preds.masks {
                Some(m) => (m[e].z.clone(), m[e].probs.clone()),
                None => (vec![1; HOURS], vec![1.0; HOURS]),
            };
            let selected: Vec<usize> = (0..HOURS).filter(|&t| mask[t] == 1).collect();
            let mut received = vec![0.0; HOURS];
            for &j in &selected {
                received[j] = match &preds.attention {
                    Some(att) => selected.iter().map(|&i| att[e].data()[i * HOURS + j]).sum(),
                    None => 1.0,
                };
            }
            let x = &inputs[e * per..(e + 1) * per];
            let mut heatmap = vec![0.0; per];
            let mut attribution = vec![0.0; CHANNELS];
            for &t in &selected {
                for c in 0..CHANNELS {
                    let v = received[t] * x[t * CHANNELS + c];
                    heatmap[t * CHANNELS + c] = v;
                    attribution[c] += v / selected.len() as f64;
                }
            }
            Explanation {
                episode_id: episode.id.clone(),
                label: episode.label,
                prob_positive: preds.prob_positive[e],
                mask,
                probs,
                attention_received: received,
                sensor_attribution: attribution,
                heatmap,
            }
        })
        .collect();
    Ok(out)
}

/// Writes every heatmap as 24 labelled rows:
/// `episode_id,hour,selected,attention_received,<channel columns>`.
pub fn write_heatmaps_csv<W: Write>(writer: W, explanations: &[Explanation]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["episode_id".to_string(), "hour".into(), "selected".into(), "attention_received".into()];
    header.extend(SensorChannel::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for ex in explanations {
        for t in 0..HOURS {
            let mut row = vec![
                ex.episode_id.clone(),
                t.to_string(),
                ex.mask[t].to_string(),
                ex.attention_received[t].to_string(),
            ];
            row.extend(ex.heatmap[t * CHANNELS..(t + 1) * CHANNELS].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean attribution of `channel` over episodes with the given label.
pub fn mean_attribution(explanations: &[Explanation], channel: SensorChannel, label: u8) -> Option<f64> {
    let vals: Vec<f64> = explanations
        .iter()
        .filter(|e| e.label == label)
        .map(|e| e.attribution(channel))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
