use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Stage;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_hash: String,
    /// Output path relative to the run directory, and its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Records a finished stage, hashing each output file.
    pub fn record(&mut self, dir: &Path, stage: &Stage, config_hash: String, outputs: &[String]) -> Result<()> {
        let outputs = outputs
            .iter()
            .map(|rel| Ok((rel.clone(), sha256_file(&dir.join(rel))?)))
            .collect::<Result<_>>()?;
        self.stages.insert(stage.key(), StageEntry { config_hash, outputs });
        Ok(())
    }

    /// Checks that `stage` ran, that its outputs are still on disk and that
    /// it was built from the current configuration. A config mismatch is
    /// tolerated only with `force`.
    pub fn require(&self, dir: &Path, stage: &Stage, current_hash: &str, force: bool) -> Result<(), CliError> {
        let key = stage.key();
        let entry = self.stages.get(&key).ok_or_else(|| {
            CliError::dependency(format!("stage `{key}` has not been run in {}", dir.display()))
        })?;
        if let Some(missing) = entry.outputs.keys().find(|rel| !dir.join(rel).exists()) {
            return Err(CliError::dependency(format!(
                "artifact `{missing}` from stage `{key}` is missing; rerun that stage"
            )));
        }
        if entry.config_hash != current_hash {
            if force {
                log::warn!("stage `{key}` was built with a different configuration; continuing because of --force");
            } else {
                return Err(CliError::dependency(format!(
                    "stage `{key}` was built with a different configuration; rerun it or pass --force"
                )));
            }
        }
        Ok(())
    }

    pub fn denoise_ids(&self) -> Vec<String> {
        self.stages
            .keys()
            .filter_map(|k| k.strip_prefix("denoise/").map(str::to_string))
            .collect()
    }
}
