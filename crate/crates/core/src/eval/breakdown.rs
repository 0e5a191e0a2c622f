use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ndcg_at_k, relative_change, RankRecord};
use crate::dataset::SplitDataset;

const CUTOFF: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    /// `None` for unary feedback.
    pub rating: Option<u8>,
    pub removed_items: usize,
    pub users: usize,
    /// Contributions to the denoised-subset relative NDCG@20 change, in
    /// percent. Summed over all rows they give that change.
    pub positive_pct: f64,
    pub negative_pct: f64,
    pub net_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingBreakdown {
    pub notice: Option<String>,
    pub rows: Vec<RatingRow>,
}

fn original_ndcg(original: &[RankRecord]) -> BTreeMap<usize, f64> {
    original.iter().map(|r| (r.user, ndcg_at_k(r.test_rank, CUTOFF))).collect()
}

/// Splits the denoised-subset NDCG@20 change by the rating of the removed
/// items. Each accepted (user, run) contributes its NDCG delta, weighted by
/// 1 / (runs of that user x items removed), to each removed item's bucket.
pub fn breakdown_by_rating(records: &[RankRecord], original: &[RankRecord], split: &SplitDataset) -> RatingBreakdown {
    let base = original_ndcg(original);
    let mut runs: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *runs.entry(r.user).or_default() += 1;
    }
    let accepted: Vec<&RankRecord> = records.iter().filter(|r| r.accepted && !r.removed.is_empty()).collect();
    let denoised: BTreeSet<usize> = accepted.iter().map(|r| r.user).collect();
    let denominator: f64 = denoised.iter().map(|u| base.get(u).copied().unwrap_or(0.0)).sum();
    let unary = split.is_unary();

    let mut buckets: BTreeMap<Option<u8>, (usize, BTreeSet<usize>, f64, f64)> = BTreeMap::new();
    for r in &accepted {
        let delta = ndcg_at_k(r.test_rank, CUTOFF) - base.get(&r.user).copied().unwrap_or(0.0);
        let w = delta / (runs[&r.user] * r.removed.len()) as f64;
        for &item in &r.removed {
            let key = if unary { None } else { split.rating(r.user, item) };
            let b = buckets.entry(key).or_default();
            b.0 += 1;
            b.1.insert(r.user);
            if w > 0.0 {
                b.2 += w;
            } else {
                b.3 += w;
            }
        }
    }
    let scale = |x: f64| if denominator > 0.0 { 100.0 * x / denominator } else { 0.0 };
    let rows = buckets
        .into_iter()
        .map(|(rating, (items, users, pos, neg))| RatingRow {
            rating,
            removed_items: items,
            users: users.len(),
            positive_pct: scale(pos),
            negative_pct: scale(neg),
            net_pct: scale(pos + neg),
        })
        .collect();
    let mut notice = None;
    if unary {
        notice = Some("feedback is unary; all removals share one bucket".to_string());
    } else if denominator == 0.0 && !accepted.is_empty() {
        notice = Some("denoised users have zero original NDCG@20; changes reported as 0".to_string());
    }
    RatingBreakdown { notice, rows }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    /// Training-history length range `lo..=hi`.
    pub lo: usize,
    pub hi: usize,
    pub users: usize,
    pub denoised_users: usize,
    /// Relative NDCG@20 change over the bucket's denoised users.
    pub relative_change: Option<f64>,
    /// Best-run validation rank against the original, over all users.
    pub improved: usize,
    pub unchanged: usize,
    pub worsened: usize,
}

/// Buckets users by quartiles of their training-history length.
pub fn breakdown_by_profile_length(
    records: &[RankRecord],
    original: &[RankRecord],
    split: &SplitDataset,
) -> Vec<LengthRow> {
    let base = original_ndcg(original);
    let mut lengths: Vec<usize> = original.iter().map(|r| split.user(r.user).history.len()).collect();
    if lengths.is_empty() {
        return Vec::new();
    }
    lengths.sort_unstable();
    let n = lengths.len();
    let mut edges: Vec<usize> = (0..4).map(|q| lengths[q * n / 4]).collect();
    edges.push(lengths[n - 1] + 1);
    edges.dedup();

    let mut per_user: BTreeMap<usize, Vec<&RankRecord>> = BTreeMap::new();
    for r in records {
        per_user.entry(r.user).or_default().push(r);
    }

    edges
        .windows(2)
        .map(|e| {
            let (lo, hi) = (e[0], e[1] - 1);
            let members: Vec<usize> = original
                .iter()
                .map(|r| r.user)
                .filter(|&u| (lo..=hi).contains(&split.user(u).history.len()))
                .collect();
            let mut row = LengthRow {
                lo,
                hi,
                users: members.len(),
                denoised_users: 0,
                relative_change: None,
                improved: 0,
                unchanged: 0,
                worsened: 0,
            };
            let (mut after, mut before) = (0.0, 0.0);
            for u in &members {
                let Some(rs) = per_user.get(u) else { continue };
                let best = rs.iter().map(|r| r.val_rank_after).min().unwrap();
                let start = rs[0].val_rank_before;
                match best.cmp(&start) {
                    std::cmp::Ordering::Less => row.improved += 1,
                    std::cmp::Ordering::Equal => row.unchanged += 1,
                    std::cmp::Ordering::Greater => row.worsened += 1,
                }
                if rs.iter().any(|r| r.accepted) {
                    row.denoised_users += 1;
                    after += rs.iter().map(|r| ndcg_at_k(r.test_rank, CUTOFF)).sum::<f64>() / rs.len() as f64;
                    before += base.get(u).copied().unwrap_or(0.0);
                }
            }
            if row.denoised_users > 0 {
                row.relative_change = relative_change(after, before);
            }
            row
        })
        .collect()
}
