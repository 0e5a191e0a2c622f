//! Cluster-structured synthetic interactions with known noise, and mock
//! chat backends, so the whole pipeline can be checked offline.

mod mock;
mod precision;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mixed_script, mock_denoiser, MockBackend, MockMode, Script, ScriptLine};
pub use precision::{noise_precision, window_noise_rate, NoisePrecision};

use crate::dataset::{ExternalId, Interaction, TitleMap};
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("failed to write {path}: {message}")]
    Write { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    /// Total profile length range, noise included.
    pub profile_len_min: usize,
    pub profile_len_max: usize,
    /// Fraction of each profile drawn from other clusters.
    pub noise_rate: f64,
    /// Zipf exponent of item popularity inside a cluster.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 400,
            n_items: 400,
            n_clusters: 20,
            profile_len_min: 12,
            profile_len_max: 20,
            noise_rate: 0.3,
            popularity_skew: 1.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn cluster_of_item(&self, item: usize) -> usize {
        item % self.n_clusters
    }

    pub fn cluster_of_user(&self, user: usize) -> usize {
        user % self.n_clusters
    }

    fn noise_count(&self, len: usize) -> usize {
        (self.noise_rate * len as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_clusters < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.n_clusters));
        }
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.profile_len_min < 4 || self.profile_len_min > self.profile_len_max {
            return bad(format!(
                "profile length range {}..={} must start at 4 or more and be non-empty",
                self.profile_len_min, self.profile_len_max
            ));
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return bad(format!("popularity_skew must be finite and non-negative, got {}", self.popularity_skew));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate must be in [0, 1), got {}", self.noise_rate));
        }
        let smallest = self.n_items / self.n_clusters;
        let len = self.profile_len_max;
        let clean = len - self.noise_count(len);
        if smallest < clean {
            return bad(format!(
                "clusters hold {smallest} items but profiles need up to {clean} in-cluster items"
            ));
        }
        let others = self.n_items - self.n_items.div_ceil(self.n_clusters);
        if others < self.noise_count(len) {
            return bad(format!("not enough out-of-cluster items for {} noise draws", self.noise_count(len)));
        }
        Ok(())
    }
}

/// Ground truth per (user id, item id).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseLabels(pub BTreeMap<ExternalId, BTreeMap<ExternalId, bool>>);

impl NoiseLabels {
    pub fn is_noise(&self, user: &ExternalId, item: &ExternalId) -> Option<bool> {
        self.0.get(user)?.get(item).copied()
    }

    pub fn noise_count(&self) -> usize {
        self.0.values().flat_map(|m| m.values()).filter(|&&n| n).count()
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub interactions: Vec<Interaction>,
    pub titles: TitleMap,
    pub labels: NoiseLabels,
}

pub fn item_id(item: usize) -> ExternalId {
    ExternalId::new((item + 1).to_string())
}

pub fn user_id(user: usize) -> ExternalId {
    ExternalId::new((user + 1).to_string())
}

/// Generates the dataset. In-cluster items are drawn with a mild
/// popularity skew, noise items uniformly from the other clusters, and
/// noise positions uniformly over the profile.
pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let clusters: Vec<Vec<usize>> = (0..spec.n_clusters)
        .map(|c| (0..spec.n_items).filter(|&i| spec.cluster_of_item(i) == c).collect())
        .collect();
    let titles: TitleMap = (0..spec.n_items)
        .map(|i| (item_id(i), format!("Item-{}-{}", spec.cluster_of_item(i), i)))
        .collect();

    let mut interactions = Vec::new();
    let mut labels = BTreeMap::new();
    for u in 0..spec.n_users {
        let mut rng = seeded_rng(spec.seed, &[u as u64]);
        let len = rng.random_range(spec.profile_len_min..=spec.profile_len_max);
        let n_noise = spec.noise_count(len);
        let home = spec.cluster_of_user(u);

        let own = &clusters[home];
        let clean: Vec<usize> = own
            .choose_multiple_weighted(&mut rng, len - n_noise, |&i| ((i / spec.n_clusters) as f64 + 1.0).powf(-spec.popularity_skew))
            .expect("positive weights")
            .copied()
            .collect();
        let foreign: Vec<usize> = (0..spec.n_items).filter(|&i| spec.cluster_of_item(i) != home).collect();
        let noise: Vec<usize> = foreign.choose_multiple(&mut rng, n_noise).copied().collect();

        let mut positions: Vec<usize> = (0..len).collect();
        positions.shuffle(&mut rng);
        let mut slots: Vec<Option<(usize, bool)>> = vec![None; len];
        for (&p, &i) in positions.iter().zip(&noise) {
            slots[p] = Some((i, true));
        }
        let mut clean_iter = clean.into_iter();
        for s in slots.iter_mut().filter(|s| s.is_none()) {
            *s = Some((clean_iter.next().unwrap(), false));
        }

        let uid = user_id(u);
        let base = 1_000_000_000 + u as u64 * 100_000;
        let mut user_labels = BTreeMap::new();
        for (pos, slot) in slots.into_iter().enumerate() {
            let (item, is_noise) = slot.unwrap();
            let rating = if is_noise { rng.random_range(1..=3) } else { rng.random_range(4..=5) };
            interactions.push(Interaction {
                user: uid.clone(),
                item: item_id(item),
                rating,
                timestamp: base + pos as u64 * 60,
            });
            user_labels.insert(item_id(item), is_noise);
        }
        labels.insert(uid, user_labels);
    }
    Ok(SynthData {
        interactions,
        titles,
        labels: NoiseLabels(labels),
    })
}

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const TITLES_FILE: &str = "titles.csv";
pub const LABELS_FILE: &str = "labels.json";

/// Writes `interactions.csv`, `titles.csv` and `labels.json` into `dir`.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<(), SynthError> {
    let err = |path: &Path, e: &dyn std::fmt::Display| SynthError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| err(dir, &e))?;

    let path = dir.join(INTERACTIONS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| err(&path, &e))?;
    w.write_record(["user", "item", "rating", "timestamp"]).map_err(|e| err(&path, &e))?;
    for i in &data.interactions {
        w.write_record([i.user.as_str(), i.item.as_str(), &i.rating.to_string(), &i.timestamp.to_string()])
            .map_err(|e| err(&path, &e))?;
    }
    w.flush().map_err(|e| err(&path, &e))?;

    let path = dir.join(TITLES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| err(&path, &e))?;
    w.write_record(["item", "title"]).map_err(|e| err(&path, &e))?;
    for (id, title) in &data.titles {
        w.write_record([id.as_str(), title]).map_err(|e| err(&path, &e))?;
    }
    w.flush().map_err(|e| err(&path, &e))?;

    let path = dir.join(LABELS_FILE);
    let json = serde_json::to_string_pretty(&data.labels).map_err(|e| err(&path, &e))?;
    std::fs::write(&path, json + "\n").map_err(|e| err(&path, &e))
}

pub fn read_labels(path: &Path) -> Result<NoiseLabels, SynthError> {
    let err = |e: &dyn std::fmt::Display| SynthError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(&e))?;
    serde_json::from_str(&text).map_err(|e| err(&e))
}
