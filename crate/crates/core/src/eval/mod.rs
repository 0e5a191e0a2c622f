//! Leave-one-out metrics, relative change, paired significance tests,
//! error accounting and breakdown tables.

mod breakdown;
mod metrics;
mod report;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use breakdown::{breakdown_by_profile_length, breakdown_by_rating, LengthRow, RatingBreakdown, RatingRow};
pub use metrics::{hr_at_k, mrr_at_k, ndcg_at_k, Metric, DEFAULT_CUTOFFS};
pub use report::{build_report, MetricsReport, ReportRow, Subset};
pub use stats::{paired_t_test, TTest, Tier};

use crate::dataset::SplitDataset;
use crate::denoise::{DenoiseOutcome, ProposalError};
use crate::scorer::{rank_of, ScoreError, Scorer};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("campaign `{method}` is incomplete: no outcome for user {user}")]
    MissingUser { method: String, user: usize },
    #[error("{0}")]
    Stats(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

pub const ORIGINAL: &str = "original";

/// Test-time result of one (user, run), with what the reports need from
/// the outcome that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub user: usize,
    pub run: u32,
    pub method: String,
    /// Test item rank with the final profile as input and as mask.
    pub test_rank: usize,
    pub val_rank_before: usize,
    /// Measured validation rank with the proposal applied.
    pub val_rank_after: usize,
    pub accepted: bool,
    pub error: ProposalError,
    /// Items actually removed (empty unless accepted).
    pub removed: Vec<usize>,
}

/// Test ranks of the untouched training rows.
pub fn original_records<S: Scorer + ?Sized>(
    split: &SplitDataset,
    scorer: &S,
    users: &[usize],
) -> Result<Vec<RankRecord>, ScoreError> {
    users
        .iter()
        .map(|&user| {
            let profile = split.profile(user);
            let test_rank = rank_of(scorer, &profile, split.user(user).test, &profile)?;
            let val = rank_of(scorer, &profile, split.user(user).val, &profile)?;
            Ok(RankRecord {
                user,
                run: 0,
                method: ORIGINAL.to_string(),
                test_rank,
                val_rank_before: val,
                val_rank_after: val,
                accepted: false,
                error: ProposalError::None,
                removed: Vec::new(),
            })
        })
        .collect()
}

/// Ranks each outcome's test item from its final profile. The validation
/// item is not added to the input row.
pub fn evaluate_campaign<S: Scorer + ?Sized>(
    method: &str,
    outcomes: &[DenoiseOutcome],
    scorer: &S,
    split: &SplitDataset,
) -> Result<Vec<RankRecord>, ScoreError> {
    outcomes
        .iter()
        .map(|o| {
            let test_rank = rank_of(scorer, &o.final_profile, split.user(o.user).test, &o.final_profile)?;
            let removed = if o.accepted {
                let kept: BTreeSet<usize> = o.final_profile.iter().copied().collect();
                split.profile(o.user).into_iter().filter(|i| !kept.contains(i)).collect()
            } else {
                Vec::new()
            };
            Ok(RankRecord {
                user: o.user,
                run: o.run,
                method: method.to_string(),
                test_rank,
                val_rank_before: o.rank_before,
                val_rank_after: o.rank_after,
                accepted: o.accepted,
                error: o.proposal.error,
                removed,
            })
        })
        .collect()
}

/// Per-user mean over runs of `metric@k`, for exactly `users`.
pub fn per_user_means(
    records: &[RankRecord],
    users: &[usize],
    metric: Metric,
    k: usize,
) -> Result<Vec<f64>, EvalError> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.user).or_default();
        e.0 += metric.at(r.test_rank, k);
        e.1 += 1;
    }
    users
        .iter()
        .map(|&u| match acc.get(&u) {
            Some(&(sum, n)) => Ok(sum / n as f64),
            None => Err(EvalError::MissingUser {
                method: records.first().map_or_else(String::new, |r| r.method.clone()),
                user: u,
            }),
        })
        .collect()
}

/// Users with at least one accepted run.
pub fn denoised_users(records: &[RankRecord]) -> Vec<usize> {
    records
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.user)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Percent change of `method` over `original`; `None` when the original is 0.
pub fn relative_change(method: f64, original: f64) -> Option<f64> {
    (original != 0.0).then(|| 100.0 * (method - original) / original)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub formatting_pct: f64,
    pub hallucination_pct: f64,
    pub proposals: usize,
}

/// Share of (user, run) proposals in each error class.
pub fn error_rates(records: &[RankRecord]) -> ErrorRates {
    let n = records.len();
    let pct = |e: ProposalError| {
        if n == 0 {
            0.0
        } else {
            100.0 * records.iter().filter(|r| r.error == e).count() as f64 / n as f64
        }
    };
    ErrorRates {
        formatting_pct: pct(ProposalError::Formatting),
        hallucination_pct: pct(ProposalError::Hallucination),
        proposals: n,
    }
}
