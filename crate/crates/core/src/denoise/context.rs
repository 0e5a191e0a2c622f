use super::{sweep_single_removals, DenoiseError, ExemplarRemoval, FewShotExemplar, TitledItem, UserContext};
use crate::dataset::SplitDataset;
use crate::scorer::{rank_of, top_k, Scorer};

/// What a denoiser needs attached to its contexts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ContextNeeds {
    pub examples: bool,
    pub top_recs: bool,
    /// Every referenced item must carry a title.
    pub titles: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextOptions {
    pub model_name: String,
    pub top_recs: usize,
}

impl Default for ContextOptions {
    fn default() -> Self {
        ContextOptions {
            model_name: "MultiVAE".to_string(),
            top_recs: 10,
        }
    }
}

fn titled(split: &SplitDataset, item: usize) -> TitledItem {
    TitledItem {
        item,
        title: split.title(item).map(str::to_string),
    }
}

/// Sweeps single removals over the window against the user's second
/// validation item and keeps the best (lowest rank) and worst (highest
/// rank) removal; ties go to the lower item index.
pub fn build_fewshot_examples<S: Scorer + ?Sized>(
    split: &SplitDataset,
    user: usize,
    scorer: &S,
) -> Result<FewShotExemplar, DenoiseError> {
    let profile = split.profile(user);
    let candidate = split.user(user).val2;
    let rank_before = rank_of(scorer, &profile, candidate, &profile)?;
    let sweep = sweep_single_removals(scorer, &profile, split.prompt_window(user), candidate)?;
    let best = sweep
        .iter()
        .min_by_key(|&&(item, rank)| (rank, item))
        .copied()
        .expect("window is never empty");
    let worst = sweep
        .iter()
        .min_by_key(|&&(item, rank)| (std::cmp::Reverse(rank), item))
        .copied()
        .expect("window is never empty");
    let removal = |(item, rank_after): (usize, usize)| ExemplarRemoval {
        item: titled(split, item),
        rank_before,
        rank_after,
    };
    Ok(FewShotExemplar {
        candidate: titled(split, candidate),
        best: removal(best),
        worst: removal(worst),
    })
}

pub fn build_context<S: Scorer + ?Sized>(
    split: &SplitDataset,
    user: usize,
    scorer: &S,
    needs: ContextNeeds,
    options: &ContextOptions,
) -> Result<UserContext, DenoiseError> {
    if user >= split.n_users() {
        return Err(DenoiseError::UnknownUser(user));
    }
    let profile = split.profile(user);
    let candidate = split.user(user).val;
    let scores = scorer.score(&profile);
    let candidate_rank = crate::scorer::rank_in_scores(&scores, candidate, &profile)?;
    let examples = if needs.examples {
        Some(build_fewshot_examples(split, user, scorer)?)
    } else {
        None
    };
    let top_recs = needs.top_recs.then(|| {
        top_k(&scores, &profile, options.top_recs)
            .into_iter()
            .map(|i| titled(split, i))
            .collect::<Vec<_>>()
    });
    let ctx = UserContext {
        user,
        window: split.prompt_window(user).iter().map(|&i| titled(split, i)).collect(),
        profile,
        candidate: titled(split, candidate),
        candidate_rank,
        examples,
        top_recs,
        model_name: options.model_name.clone(),
    };

    if needs.titles {
        let mut referenced: Vec<&TitledItem> = ctx.window.iter().chain([&ctx.candidate]).collect();
        if let Some(e) = &ctx.examples {
            referenced.extend([&e.candidate, &e.best.item, &e.worst.item]);
        }
        if let Some(r) = &ctx.top_recs {
            referenced.extend(r);
        }
        if let Some(missing) = referenced.into_iter().find(|t| t.title.is_none()) {
            return Err(DenoiseError::MissingTitle {
                item_id: split.catalog.item_id(missing.item).to_string(),
            });
        }
    }
    Ok(ctx)
}
