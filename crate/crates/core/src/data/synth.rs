//! Synthetic stand-in for a cohort of in-home sensor recordings.
//!
//! Negative days follow a circadian routine: each (hour, channel) count is
//! Poisson with a rate from [`routine_rate`], scaled by a per-day activity
//! level and occasionally boosted by uninformative daytime bursts (visitors,
//! cleaning). Positive days apply a stylised incident signature before
//! sampling: night-time bathroom (and hallway) activity is multiplied and
//! kitchen-appliance use is suppressed. The signature is illustrative only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{Episode, SensorChannel, CHANNELS, HOURS};
use crate::train::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_episodes: usize,
    pub positive_fraction: f64,
    pub seed: u64,
    /// Multiplies every routine rate.
    pub rate_scale: f64,
    /// Log-normal sigma of the per-day activity level (daytime hours only).
    pub activity_spread: f64,
    /// Probability that a daytime hour carries a burst of extra activity.
    pub burst_probability: f64,
    /// Mean extra count per burst-affected channel.
    pub burst_rate: f64,
    /// Night-time bathroom rate multiplier on positive days.
    pub night_bathroom_multiplier: f64,
    /// Night-time hallway multiplier on positive days.
    pub night_hallway_multiplier: f64,
    /// Kitchen and appliance rate factor on positive days.
    pub kitchen_suppression: f64,
    /// First hour of the night window.
    pub anomaly_onset_hour: usize,
    /// Length of the night window in hours.
    pub anomaly_hours: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_episodes: 312,
            positive_fraction: 0.25,
            seed: 7,
            rate_scale: 1.0,
            activity_spread: 0.35,
            burst_probability: 0.15,
            burst_rate: 4.0,
            night_bathroom_multiplier: 2.5,
            night_hallway_multiplier: 1.5,
            kitchen_suppression: 0.85,
            anomaly_onset_hour: 0,
            anomaly_hours: 6,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad("positive_fraction must lie in (0, 1)");
        }
        let rates = [
            self.rate_scale,
            self.activity_spread,
            self.burst_rate,
            self.night_bathroom_multiplier,
            self.night_hallway_multiplier,
            self.kitchen_suppression,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("rates, spreads and multipliers must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.burst_probability) {
            return bad("burst_probability must lie in [0, 1]");
        }
        if self.anomaly_onset_hour >= HOURS || self.anomaly_hours > HOURS {
            return bad("anomaly window must fit in a day");
        }
        Ok(())
    }

    pub fn in_anomaly_window(&self, hour: usize) -> bool {
        (hour + HOURS - self.anomaly_onset_hour) % HOURS < self.anomaly_hours
    }

    pub fn n_positive(&self) -> usize {
        (self.n_episodes as f64 * self.positive_fraction).round() as usize
    }
}

/// Mean hourly count of `channel` at `hour` in the routine template.
pub fn routine_rate(hour: usize, channel: SensorChannel) -> f64 {
    use SensorChannel::*;
    // columns: bathroom, hallway, bedroom, lounge, kitchen, fridge, kettle, microwave
    let row: [f64; CHANNELS] = match hour {
        0..=5 => [0.3, 0.3, 1.0, 0.05, 0.1, 0.05, 0.02, 0.02],
        6 => [1.5, 2.0, 3.0, 0.5, 1.0, 0.5, 0.3, 0.1],
        7..=9 => [2.0, 3.0, 1.0, 2.0, 5.0, 2.0, 1.5, 0.5],
        10..=11 => [1.0, 2.0, 0.5, 6.0, 2.0, 0.8, 0.5, 0.3],
        12..=13 => [1.2, 2.0, 0.3, 4.0, 5.0, 2.0, 1.0, 1.5],
        14..=16 => [1.0, 2.0, 0.5, 6.0, 1.5, 0.6, 0.6, 0.2],
        17..=19 => [1.5, 2.5, 0.5, 4.0, 6.0, 2.5, 1.0, 2.0],
        20..=21 => [1.5, 2.0, 1.0, 5.0, 1.0, 0.5, 0.8, 0.3],
        _ => [1.5, 1.5, 3.0, 1.0, 0.3, 0.2, 0.2, 0.1],
    };
    let col = match channel {
        Bathroom => 0,
        Hallway => 1,
        Bedroom => 2,
        Lounge => 3,
        Kitchen => 4,
        FridgeDoor => 5,
        Kettle => 6,
        Microwave => 7,
    };
    row[col]
}

/// Channels that daytime bursts add activity to.
const BURST_CHANNELS: [SensorChannel; 3] = [SensorChannel::Hallway, SensorChannel::Lounge, SensorChannel::Kitchen];

fn poisson(rng: &mut impl Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        0.0
    } else {
        Poisson::new(rate).expect("positive rate").sample(rng)
    }
}

/// Generates `cfg.n_episodes` episodes, exactly `round(n · positive_fraction)`
/// of them positive, in shuffled order. Deterministic given the config.
pub fn generate_dataset(cfg: &ScenarioConfig) -> Result<Vec<Episode>, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_pos = cfg.n_positive();
    let mut labels: Vec<u8> = (0..cfg.n_episodes).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    let activity = LogNormal::new(0.0, cfg.activity_spread).map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let episodes = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let level = activity.sample(&mut rng);
            let mut matrix = vec![0.0; HOURS * CHANNELS];
            for hour in 0..HOURS {
                let night = cfg.in_anomaly_window(hour);
                let burst = !night && rng.gen::<f64>() < cfg.burst_probability;
                for channel in SensorChannel::ALL {
                    let mut rate = routine_rate(hour, channel) * cfg.rate_scale;
                    if !night {
                        rate *= level;
                    }
                    if label == 1 {
                        if night && channel == SensorChannel::Bathroom {
                            rate *= cfg.night_bathroom_multiplier;
                        }
                        if night && channel == SensorChannel::Hallway {
                            rate *= cfg.night_hallway_multiplier;
                        }
                        if channel.is_kitchen() {
                            rate *= cfg.kitchen_suppression;
                        }
                    }
                    if burst && BURST_CHANNELS.contains(&channel) {
                        rate += cfg.burst_rate * cfg.rate_scale;
                    }
                    matrix[hour * CHANNELS + channel.index()] = poisson(&mut rng, rate);
                }
            }
            let mut e = Episode::new(format!("syn-{:04}", i), matrix, label);
            e.meta = Some(format!("synthetic seed={}", cfg.seed));
            e
        })
        .collect();
    Ok(episodes)
}
