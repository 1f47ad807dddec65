use rand::Rng;
use serde::{Deserialize, Serialize};

/// Generator probabilities are kept this far from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-6;

/// Binary selection over the timesteps of one episode, with the
/// probabilities it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleMask {
    pub z: Vec<u8>,
    pub probs: Vec<f64>,
    pub selection_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Independent Bernoulli draw per timestep (training).
    Sample,
    /// `z = probs >= 0.5` (inference).
    Threshold,
}

impl RationaleMask {
    pub fn from_parts(z: Vec<u8>, probs: Vec<f64>) -> Self {
        assert_eq!(z.len(), probs.len());
        assert!(z.iter().all(|&v| v <= 1), "mask entries must be 0 or 1");
        let selection_rate = if z.is_empty() {
            0.0
        } else {
            z.iter().map(|&v| f64::from(v)).sum::<f64>() / z.len() as f64
        };
        Self {
            z,
            probs,
            selection_rate,
        }
    }

    pub fn draw(probs: Vec<f64>, mode: MaskMode, rng: &mut impl Rng) -> Self {
        let probs: Vec<f64> = probs.into_iter().map(clamp_prob).collect();
        let z = match mode {
            MaskMode::Sample => probs.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect(),
            MaskMode::Threshold => probs.iter().map(|&p| u8::from(p >= 0.5)).collect(),
        };
        Self::from_parts(z, probs)
    }

    /// Every timestep selected, as used when the rational stage is disabled.
    pub fn all_selected(len: usize) -> Self {
        Self::from_parts(vec![1; len], vec![1.0 - PROB_CLAMP; len])
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn selected(&self) -> usize {
        self.z.iter().filter(|&&v| v == 1).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.z[i] == 1).collect()
    }

    /// `log p(z|x)`: the sum of independent per-timestep Bernoulli log-probabilities.
    pub fn log_prob(&self) -> f64 {
        bernoulli_log_prob(&self.probs, &self.z)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn bernoulli_log_prob(probs: &[f64], z: &[u8]) -> f64 {
    probs
        .iter()
        .zip(z)
        .map(|(&p, &zi)| if zi == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

/// All `2^len` binary masks, in counting order.
pub fn enumerate_masks(len: usize) -> Vec<Vec<u8>> {
    assert!(len < 24, "enumeration of 2^{len} masks is not sensible");
    (0..1u32 << len)
        .map(|bits| (0..len).map(|i| ((bits >> i) & 1) as u8).collect())
        .collect()
}
