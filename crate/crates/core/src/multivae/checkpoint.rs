use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON checkpoint: format version, the training config
/// (seed included) and row-major weight arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
}

fn err(path: &Path, message: impl ToString) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn save_checkpoint(path: &Path, config: &TrainConfig, params: &ModelParams) -> Result<(), ModelError> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        params: params.clone(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| err(path, e))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| err(path, e))?;
    }
    fs::write(path, text).map_err(|e| err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| err(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| err(path, e))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(err(path, format!("unsupported checkpoint version {}", ckpt.version)));
    }
    let p = &ckpt.params;
    let d = p.dims;
    let shapes_ok = p.enc_w1.dim() == (d.n_items, d.hidden)
        && p.enc_b1.len() == d.hidden
        && p.enc_w2.dim() == (d.hidden, 2 * d.latent)
        && p.enc_b2.len() == 2 * d.latent
        && p.dec_w1.dim() == (d.latent, d.hidden)
        && p.dec_b1.len() == d.hidden
        && p.dec_w2.dim() == (d.hidden, d.n_items)
        && p.dec_b2.len() == d.n_items;
    if !shapes_ok {
        return Err(err(path, "tensor shapes disagree with dims"));
    }
    if !p.is_finite() {
        return Err(err(path, "non-finite weights"));
    }
    Ok(ckpt)
}
