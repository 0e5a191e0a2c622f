//! The scorer contract the denoisers depend on, and rank computation.
//!
//! Ranks are 1-based over unmasked items. An item beats the candidate when
//! its score is strictly higher, or equal with a smaller item index.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("candidate item {0} is masked")]
    CandidateMasked(usize),
    #[error("item {0} is not in the user profile")]
    NotInProfile(usize),
    #[error("item index {index} out of range for {n_items} items")]
    OutOfRange { index: usize, n_items: usize },
}

/// A trained collaborative-filtering model. Profiles are sparse binary rows
/// given as item-index sets.
pub trait Scorer: Send + Sync {
    fn n_items(&self) -> usize;

    /// Deterministic per-item scores for a profile.
    fn score(&self, profile: &[usize]) -> Vec<f64>;

    /// `items x d` item representation.
    fn item_embeddings(&self) -> Array2<f64>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn n_items(&self) -> usize {
        (**self).n_items()
    }
    fn score(&self, profile: &[usize]) -> Vec<f64> {
        (**self).score(profile)
    }
    fn item_embeddings(&self) -> Array2<f64> {
        (**self).item_embeddings()
    }
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn n_items(&self) -> usize {
        (**self).n_items()
    }
    fn score(&self, profile: &[usize]) -> Vec<f64> {
        (**self).score(profile)
    }
    fn item_embeddings(&self) -> Array2<f64> {
        (**self).item_embeddings()
    }
}

fn mask_vec(n_items: usize, mask: &[usize]) -> Result<Vec<bool>, ScoreError> {
    let mut m = vec![false; n_items];
    for &i in mask {
        *m.get_mut(i).ok_or(ScoreError::OutOfRange { index: i, n_items })? = true;
    }
    Ok(m)
}

/// Rank of `candidate` in a score vector, excluding masked items.
pub fn rank_in_scores(scores: &[f64], candidate: usize, mask: &[usize]) -> Result<usize, ScoreError> {
    let n_items = scores.len();
    if candidate >= n_items {
        return Err(ScoreError::OutOfRange {
            index: candidate,
            n_items,
        });
    }
    let masked = mask_vec(n_items, mask)?;
    if masked[candidate] {
        return Err(ScoreError::CandidateMasked(candidate));
    }
    let c = scores[candidate];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| !masked[i] && i != candidate && (s > c || (s == c && i < candidate)))
        .count();
    Ok(ahead + 1)
}

pub fn rank_of<S: Scorer + ?Sized>(
    scorer: &S,
    profile: &[usize],
    candidate: usize,
    mask: &[usize],
) -> Result<usize, ScoreError> {
    rank_in_scores(&scorer.score(profile), candidate, mask)
}

/// Zeroes the removed coordinates, re-runs inference and ranks the candidate
/// with the removed items unmasked. No parameters change.
pub fn rescore_with_removals<S: Scorer + ?Sized>(
    scorer: &S,
    profile: &[usize],
    removals: &[usize],
    candidate: usize,
    mask: &[usize],
) -> Result<usize, ScoreError> {
    if let Some(&bad) = removals.iter().find(|r| !profile.contains(r)) {
        return Err(ScoreError::NotInProfile(bad));
    }
    let edited: Vec<usize> = profile.iter().copied().filter(|i| !removals.contains(i)).collect();
    let mask: Vec<usize> = mask.iter().copied().filter(|i| !removals.contains(i)).collect();
    rank_of(scorer, &edited, candidate, &mask)
}

/// The `k` best unmasked items, best first, ties to the lower index.
pub fn top_k(scores: &[f64], mask: &[usize], k: usize) -> Vec<usize> {
    let masked = mask_vec(scores.len(), mask).unwrap_or_else(|_| vec![false; scores.len()]);
    let mut items: Vec<usize> = (0..scores.len()).filter(|&i| !masked[i]).collect();
    items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    items.truncate(k);
    items
}

/// Item-to-item linear model: `score = sum of weight rows over the profile`.
/// Small, exact and cheap; used to exercise the denoisers without training.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearScorer {
    pub weights: Array2<f64>,
}

impl LinearScorer {
    pub fn new(weights: Array2<f64>) -> Self {
        assert_eq!(weights.nrows(), weights.ncols(), "item-item weights must be square");
        LinearScorer { weights }
    }
}

impl Scorer for LinearScorer {
    fn n_items(&self) -> usize {
        self.weights.nrows()
    }

    fn score(&self, profile: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items()];
        for &i in profile {
            for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += w;
            }
        }
        out
    }

    fn item_embeddings(&self) -> Array2<f64> {
        self.weights.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sort_rank(scores: &[f64], candidate: usize, mask: &[usize]) -> usize {
        let mut items: Vec<usize> = (0..scores.len()).filter(|i| !mask.contains(i)).collect();
        items.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        items.iter().position(|&i| i == candidate).unwrap() + 1
    }

    #[test]
    fn best_item_ranks_first() {
        assert_eq!(rank_in_scores(&[0.1, 0.9, 0.5], 1, &[]).unwrap(), 1);
        assert_eq!(rank_in_scores(&[0.1, 0.9, 0.5], 0, &[1]).unwrap(), 2);
    }

    #[test]
    fn ties_break_on_index() {
        let s = [1.0; 5];
        assert_eq!(rank_in_scores(&s, 2, &[0, 1]).unwrap(), 1);
        assert_eq!(rank_in_scores(&s, 4, &[0]).unwrap(), 4);
    }

    #[test]
    fn masked_candidate_rejected() {
        assert_eq!(rank_in_scores(&[1.0, 2.0], 1, &[1]), Err(ScoreError::CandidateMasked(1)));
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(
            scores in prop::collection::vec(prop_oneof![Just(0.5f64), -3.0f64..3.0], 2..40),
            mask_bits in prop::collection::vec(any::<bool>(), 40),
            pick in any::<prop::sample::Index>(),
        ) {
            let n = scores.len();
            let mask: Vec<usize> = (0..n).filter(|&i| mask_bits[i]).collect();
            let free: Vec<usize> = (0..n).filter(|i| !mask.contains(i)).collect();
            prop_assume!(!free.is_empty());
            let candidate = free[pick.index(free.len())];
            let r = rank_in_scores(&scores, candidate, &mask).unwrap();
            prop_assert_eq!(r, sort_rank(&scores, candidate, &mask));
            prop_assert!(r >= 1 && r <= n - mask.len());
        }

        #[test]
        fn unmasking_never_improves_rank(
            scores in prop::collection::vec(-3.0f64..3.0, 3..30),
            drop in any::<prop::sample::Index>(),
        ) {
            let n = scores.len();
            let mask: Vec<usize> = (1..n).step_by(2).collect();
            let removed = mask[drop.index(mask.len())];
            let smaller: Vec<usize> = mask.iter().copied().filter(|&i| i != removed).collect();
            let before = rank_in_scores(&scores, 0, &mask).unwrap();
            let after = rank_in_scores(&scores, 0, &smaller).unwrap();
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn rescore_identity_and_errors() {
        let w = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - (i == j) as u8 as f64);
        let s = LinearScorer::new(w);
        let profile = [0, 2, 3];
        assert_eq!(
            rescore_with_removals(&s, &profile, &[], 4, &profile).unwrap(),
            rank_of(&s, &profile, 4, &profile).unwrap()
        );
        assert_eq!(
            rescore_with_removals(&s, &profile, &[1], 4, &profile),
            Err(ScoreError::NotInProfile(1))
        );
        // removing everything equals the empty-row rank
        assert_eq!(
            rescore_with_removals(&s, &profile, &profile, 4, &profile).unwrap(),
            rank_of(&s, &[], 4, &[]).unwrap()
        );
    }

    #[test]
    fn top_k_skips_mask() {
        assert_eq!(top_k(&[0.3, 0.9, 0.9, 0.1], &[1], 2), vec![2, 0]);
    }
}
