//! Versioned JSON checkpoint container: config, parameter tensors, RNG
//! stream states, epoch index.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::TrainConfig;
use crate::models::{EncoderParams, EnvEmbedding};

pub const CHECKPOINT_VERSION: u32 = 1;

/// State of one named ChaCha stream, enough to reconstruct it exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngStateSnapshot {
    pub name: String,
    /// 32-byte seed, hex-encoded.
    pub seed: String,
    /// Word position within the stream, decimal.
    pub word_pos: String,
}

impl RngStateSnapshot {
    pub fn of(name: &str, rng: &rand_chacha::ChaCha8Rng) -> RngStateSnapshot {
        RngStateSnapshot {
            name: name.to_string(),
            seed: hex::encode(rng.get_seed()),
            word_pos: rng.get_word_pos().to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub config: TrainConfig,
    pub f_i: EncoderParams,
    /// Present only for runs that train a rationale generator.
    pub generator: Option<EncoderParams>,
    pub f_e: Option<EncoderParams>,
    pub env_table: Option<EnvEmbedding>,
    pub rng: Vec<RngStateSnapshot>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::BadCheckpointVersion(ckpt.version));
        }
        Ok(ckpt)
    }
}
