use std::collections::BTreeSet;

use super::{DenoiseOutcome, ProposalError, RemovalProposal, UserContext};
use crate::scorer::{rescore_with_removals, ScoreError, Scorer};

/// Applies a proposal if it strictly improves the validation rank, and
/// reverts it otherwise. Proposals with an error never reach the scorer.
///
/// A proposal claiming no error but whose removals are unresolved,
/// duplicated or outside the window is downgraded to the matching error
/// class before gating.
pub fn apply_and_gate<S: Scorer + ?Sized>(
    ctx: &UserContext,
    mut proposal: RemovalProposal,
    scorer: &S,
) -> Result<DenoiseOutcome, ScoreError> {
    let rejected = |proposal: RemovalProposal| DenoiseOutcome {
        user: ctx.user,
        run: proposal.source.run,
        rank_before: ctx.candidate_rank,
        rank_after: ctx.candidate_rank,
        accepted: false,
        final_profile: ctx.profile.clone(),
        proposal,
    };
    if proposal.error != ProposalError::None {
        return Ok(rejected(proposal));
    }
    let items = match proposal.items() {
        Some(items) if !items.is_empty() && items.iter().collect::<BTreeSet<_>>().len() == items.len() => items,
        _ => {
            proposal.error = ProposalError::Formatting;
            return Ok(rejected(proposal));
        }
    };
    if items.iter().any(|i| !ctx.window.iter().any(|w| w.item == *i)) {
        proposal.error = ProposalError::Hallucination;
        return Ok(rejected(proposal));
    }

    let rank_after = rescore_with_removals(scorer, &ctx.profile, &items, ctx.candidate.item, &ctx.profile)?;
    let accepted = rank_after < ctx.candidate_rank;
    let final_profile = if accepted {
        ctx.profile.iter().copied().filter(|i| !items.contains(i)).collect()
    } else {
        ctx.profile.clone()
    };
    Ok(DenoiseOutcome {
        user: ctx.user,
        run: proposal.source.run,
        rank_before: ctx.candidate_rank,
        rank_after,
        accepted,
        final_profile,
        proposal,
    })
}
