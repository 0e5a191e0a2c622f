use serde::{Deserialize, Serialize};

use super::NoiseLabels;
use crate::dataset::SplitDataset;
use crate::denoise::DenoiseOutcome;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePrecision {
    pub removed: usize,
    pub noisy_removed: usize,
    /// Labeled noise in the training rows of accepted outcomes.
    pub noise_total: usize,
    /// `None` when nothing was removed.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn is_noise(split: &SplitDataset, labels: &NoiseLabels, user: usize, item: usize) -> bool {
    labels
        .is_noise(split.catalog.user_id(user), split.catalog.item_id(item))
        .unwrap_or(false)
}

/// Precision and recall of removed items against the noise labels, over
/// accepted outcomes only.
pub fn noise_precision(outcomes: &[DenoiseOutcome], labels: &NoiseLabels, split: &SplitDataset) -> NoisePrecision {
    let (mut removed, mut noisy_removed, mut noise_total) = (0, 0, 0);
    for o in outcomes.iter().filter(|o| o.accepted) {
        let original = split.profile(o.user);
        noise_total += original.iter().filter(|&&i| is_noise(split, labels, o.user, i)).count();
        for &i in original.iter().filter(|i| !o.final_profile.contains(i)) {
            removed += 1;
            noisy_removed += is_noise(split, labels, o.user, i) as usize;
        }
    }
    NoisePrecision {
        removed,
        noisy_removed,
        noise_total,
        precision: (removed > 0).then(|| noisy_removed as f64 / removed as f64),
        recall: (removed > 0 && noise_total > 0).then(|| noisy_removed as f64 / noise_total as f64),
    }
}

/// Mean share of labeled noise in the prompt windows of `users`: the
/// expected precision of an ungated uniform removal.
pub fn window_noise_rate(split: &SplitDataset, labels: &NoiseLabels, users: &[usize]) -> f64 {
    if users.is_empty() {
        return 0.0;
    }
    let total: f64 = users
        .iter()
        .map(|&u| {
            let w = split.prompt_window(u);
            w.iter().filter(|&&i| is_noise(split, labels, u, i)).count() as f64 / w.len() as f64
        })
        .sum();
    total / users.len() as f64
}
