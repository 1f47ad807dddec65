use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelKind, RewardBaseline};
use crate::params::ParamStore;
use crate::train::{AdamState, ConfigError, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint version {0} is not supported")]
    Version(u32),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to rebuild a model and continue its optimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub params: ParamStore,
    pub optimizer: AdamState,
    pub baseline: RewardBaseline,
    pub rng: RngState,
    /// Path of the run manifest that produced this checkpoint.
    #[serde(default)]
    pub manifest: Option<String>,
}

impl Checkpoint {
    pub fn capture(model: &Model, epoch: usize, optimizer: &AdamState, baseline: &RewardBaseline, rng: &ChaCha8Rng) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: model.kind(),
            config: model.config().clone(),
            epoch,
            params: model.params().clone(),
            optimizer: optimizer.clone(),
            baseline: *baseline,
            rng: RngState::capture(rng),
            manifest: None,
        }
    }

    /// Rebuilds the model and loads the stored weights into it.
    pub fn model(&self) -> Result<Model, ConfigError> {
        let mut model = Model::new(self.kind, &self.config)?;
        model.load_params(self.params.clone())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ckpt.version));
        }
        ckpt.model()?;
        Ok(ckpt)
    }
}
