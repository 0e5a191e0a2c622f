use serde::{Deserialize, Serialize};

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 20, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Hr,
    Mrr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ndcg, Metric::Hr, Metric::Mrr];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Ndcg => "NDCG",
            Metric::Hr => "HR",
            Metric::Mrr => "MRR",
        }
    }

    pub fn at(self, rank: usize, k: usize) -> f64 {
        match self {
            Metric::Ndcg => ndcg_at_k(rank, k),
            Metric::Hr => hr_at_k(rank, k),
            Metric::Mrr => mrr_at_k(rank, k),
        }
    }
}

/// Single relevant item, so the ideal DCG is 1.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn mrr_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / rank as f64
    } else {
        0.0
    }
}
