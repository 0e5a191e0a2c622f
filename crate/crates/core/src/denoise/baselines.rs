use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::IndexedRandom;

use super::{Denoiser, RemovalProposal, UserContext};
use crate::rng::seeded_rng;
use crate::scorer::{rescore_with_removals, ScoreError, Scorer};

/// Validation rank after removing each window item on its own, in window order.
pub fn sweep_single_removals<S: Scorer + ?Sized>(
    scorer: &S,
    profile: &[usize],
    window: &[usize],
    candidate: usize,
) -> Result<Vec<(usize, usize)>, ScoreError> {
    window
        .iter()
        .map(|&i| Ok((i, rescore_with_removals(scorer, profile, &[i], candidate, profile)?)))
        .collect()
}

/// `k` distinct window items drawn uniformly, returned in window order.
pub fn random_k(ctx: &UserContext, k: usize, seed: u64, run: u32) -> Vec<usize> {
    let mut rng = seeded_rng(seed, &[ctx.user as u64, run as u64, k as u64]);
    let positions: Vec<usize> = (0..ctx.window.len()).collect();
    let mut picked: Vec<usize> = positions.choose_multiple(&mut rng, k.min(ctx.window.len())).copied().collect();
    picked.sort_unstable();
    picked.into_iter().map(|p| ctx.window[p].item).collect()
}

/// The `k` most popular window items; equal counts go to the lower index.
pub fn toppop_k(ctx: &UserContext, k: usize, popularity: &[u32]) -> Vec<usize> {
    let mut items = ctx.window_items();
    items.sort_by_key(|&i| (std::cmp::Reverse(popularity[i]), i));
    items.truncate(k);
    items
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(&b) / (na * nb)
    }
}

/// The `k` window items least similar (cosine) to the user embedding, the
/// mean item embedding over the full training profile. Ties go to the
/// lower index; a zero-norm vector has similarity 0.
pub fn semantic_k(ctx: &UserContext, k: usize, embeddings: &Array2<f64>) -> Vec<usize> {
    let mut user = Array1::zeros(embeddings.ncols());
    for &i in &ctx.profile {
        user += &embeddings.row(i);
    }
    if !ctx.profile.is_empty() {
        user /= ctx.profile.len() as f64;
    }
    let mut scored: Vec<(f64, usize)> = ctx
        .window
        .iter()
        .map(|w| (cosine(embeddings.row(w.item), user.view()), w.item))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Exhaustive search over single items (k = 1) or unordered pairs (k = 2)
/// of the window for the removal minimizing the validation rank. Ties go to
/// the lexicographically smallest sorted index set. Returns the set and the
/// rank it reaches, whether or not that improves on the current rank.
pub fn upper_bound_on_val_k<S: Scorer + ?Sized>(
    ctx: &UserContext,
    k: usize,
    scorer: &S,
) -> Result<(Vec<usize>, usize), ScoreError> {
    let window = ctx.window_items();
    let candidates: Vec<Vec<usize>> = match k {
        1 => window.iter().map(|&i| vec![i]).collect(),
        _ => {
            let mut pairs = Vec::new();
            for a in 0..window.len() {
                for b in a + 1..window.len() {
                    let mut p = vec![window[a], window[b]];
                    p.sort_unstable();
                    pairs.push(p);
                }
            }
            pairs
        }
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    for set in candidates {
        let rank = rescore_with_removals(scorer, &ctx.profile, &set, ctx.candidate.item, &ctx.profile)?;
        let better = match &best {
            None => true,
            Some((r, s)) => (rank, &set) < (*r, s),
        };
        if better {
            best = Some((rank, set));
        }
    }
    let (rank, set) = best.expect("window has at least k items");
    Ok((set, rank))
}

pub struct RandomDenoiser {
    id: String,
}

impl RandomDenoiser {
    pub fn new(id: impl Into<String>) -> Self {
        RandomDenoiser { id: id.into() }
    }
}

impl Denoiser for RandomDenoiser {
    fn id(&self) -> &str {
        &self.id
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn propose(&self, ctx: &UserContext, k: usize, seed: u64, run: u32) -> RemovalProposal {
        RemovalProposal::valid(&self.id, run, random_k(ctx, k, seed, run))
    }
}

pub struct TopPopDenoiser {
    id: String,
    popularity: Vec<u32>,
}

impl TopPopDenoiser {
    /// `popularity` must come from the training matrix only.
    pub fn new(id: impl Into<String>, popularity: Vec<u32>) -> Self {
        TopPopDenoiser {
            id: id.into(),
            popularity,
        }
    }
}

impl Denoiser for TopPopDenoiser {
    fn id(&self) -> &str {
        &self.id
    }
    fn propose(&self, ctx: &UserContext, k: usize, _seed: u64, run: u32) -> RemovalProposal {
        RemovalProposal::valid(&self.id, run, toppop_k(ctx, k, &self.popularity))
    }
}

pub struct SemanticDenoiser {
    id: String,
    embeddings: Array2<f64>,
}

impl SemanticDenoiser {
    pub fn new(id: impl Into<String>, embeddings: Array2<f64>) -> Self {
        SemanticDenoiser {
            id: id.into(),
            embeddings,
        }
    }
}

impl Denoiser for SemanticDenoiser {
    fn id(&self) -> &str {
        &self.id
    }
    fn propose(&self, ctx: &UserContext, k: usize, _seed: u64, run: u32) -> RemovalProposal {
        RemovalProposal::valid(&self.id, run, semantic_k(ctx, k, &self.embeddings))
    }
}

pub struct UpperBoundOnValDenoiser<S> {
    id: String,
    scorer: S,
}

impl<S: Scorer> UpperBoundOnValDenoiser<S> {
    pub fn new(id: impl Into<String>, scorer: S) -> Self {
        UpperBoundOnValDenoiser { id: id.into(), scorer }
    }
}

impl<S: Scorer> Denoiser for UpperBoundOnValDenoiser<S> {
    fn id(&self) -> &str {
        &self.id
    }
    fn propose(&self, ctx: &UserContext, k: usize, _seed: u64, run: u32) -> RemovalProposal {
        let (set, _) = upper_bound_on_val_k(ctx, k, &self.scorer)
            .expect("window items belong to the profile and the candidate is held out");
        RemovalProposal::valid(&self.id, run, set)
    }
}
