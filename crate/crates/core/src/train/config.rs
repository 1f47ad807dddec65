use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("reading config {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config")]
    Parse(#[from] toml::de::Error),
}

/// How the discrete mask is differentiated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Score-function gradient with a moving-average baseline.
    #[default]
    Reinforce,
    /// Hard sample forward, sigmoid gradient backward. Not the canonical
    /// estimator; kept for comparison.
    StraightThrough,
}

/// How masks are produced when scoring held-out data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMask {
    /// `z = probs >= 0.5`, deterministic.
    #[default]
    Threshold,
    /// One Bernoulli draw per timestep.
    Sample,
}

/// Component switches of the proposed model. All on is the full model;
/// each ablation arm turns exactly one off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variant {
    pub rational: bool,
    pub attention: bool,
    pub residual: bool,
    pub focal: bool,
    pub pe: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self {
            rational: true,
            attention: true,
            residual: true,
            focal: true,
            pe: true,
        }
    }
}

impl Variant {
    /// Full model followed by the five single-component ablations.
    pub fn ablation_arms() -> [(&'static str, Variant); 6] {
        let full = Variant::default();
        [
            ("full", full),
            ("no_rational", Variant { rational: false, ..full }),
            ("no_attention", Variant { attention: false, ..full }),
            ("no_residual", Variant { residual: false, ..full }),
            ("no_focal", Variant { focal: false, ..full }),
            ("no_pe", Variant { pe: false, ..full }),
        ]
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_sparsity: f64,
    pub focal_alpha: f64,
    pub focal_beta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Per-timestep feature width seen by the positional encoding.
    pub d_model: usize,
    /// Query/key/value width of the attention block.
    pub d_k: usize,
    pub lstm_hidden: usize,
    pub residual_blocks: usize,
    pub residual_width: usize,
    pub generator_hidden: usize,
    /// Initial bias of the generator's output unit (logit of the starting
    /// selection probability).
    pub generator_init_bias: f64,
    pub nn_hidden: usize,
    pub estimator: Estimator,
    pub baseline_decay: f64,
    pub eval_mask: EvalMask,
    /// Feed `ln(1 + count)` instead of raw counts.
    pub log_counts: bool,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            lambda_sparsity: 1e-3,
            focal_alpha: 0.75,
            focal_beta: 2.0,
            epochs: 100,
            seed: 0,
            d_model: 8,
            d_k: 8,
            lstm_hidden: 128,
            residual_blocks: 1,
            residual_width: 128,
            generator_hidden: 16,
            generator_init_bias: 2.0,
            nn_hidden: 200,
            estimator: Estimator::Reinforce,
            baseline_decay: 0.9,
            eval_mask: EvalMask::Threshold,
            log_counts: true,
            variant: Variant::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and >= 0");
        }
        if !(self.lambda_sparsity >= 0.0 && self.lambda_sparsity.is_finite()) {
            return fail("lambda_sparsity must be finite and >= 0");
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha.is_finite()) {
            return fail("focal_alpha must be > 0");
        }
        if !(self.focal_beta >= 0.0 && self.focal_beta.is_finite()) {
            return fail("focal_beta must be >= 0");
        }
        if self.d_model == 0 || self.d_k == 0 || self.lstm_hidden == 0 || self.generator_hidden == 0 {
            return fail("layer widths must be positive");
        }
        if self.residual_width == 0 || self.nn_hidden == 0 {
            return fail("layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return fail("baseline_decay must lie in [0, 1)");
        }
        if !self.generator_init_bias.is_finite() {
            return fail("generator_init_bias must be finite");
        }
        Ok(())
    }

    /// Focal parameters in effect: the focal-off arm uses plain cross-entropy.
    pub fn focal_params(&self) -> (f64, f64) {
        if self.variant.focal {
            (self.focal_alpha, self.focal_beta)
        } else {
            (1.0, 0.0)
        }
    }

    /// Reads a TOML file whose keys override the defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_run_settings() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.lambda_sparsity, 1e-3);
        assert_eq!(cfg.lstm_hidden, 128);
        assert_eq!(cfg.variant, Variant::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let cfg: ModelConfig = toml::from_str("epochs = 3\n[variant]\nfocal = false\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(!cfg.variant.focal && cfg.variant.rational);
        assert_eq!(cfg.focal_params(), (1.0, 0.0));
        assert_eq!(cfg.batch_size, 32);
    }

    #[test]
    fn rejects_bad_focal_parameters() {
        let cfg = ModelConfig {
            focal_alpha: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            focal_beta: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn six_ablation_arms_each_drop_one_component() {
        let arms = Variant::ablation_arms();
        assert_eq!(arms.len(), 6);
        for (_, v) in &arms[1..] {
            let on = [v.rational, v.attention, v.residual, v.focal, v.pe];
            assert_eq!(on.iter().filter(|&&b| !b).count(), 1);
        }
    }
}
