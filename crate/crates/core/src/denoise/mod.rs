//! The denoiser contract, baseline removal policies, the rank-improvement
//! gate and campaign orchestration.

mod baselines;
mod campaign;
mod context;
mod gate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{
    random_k, semantic_k, sweep_single_removals, toppop_k, upper_bound_on_val_k, RandomDenoiser,
    SemanticDenoiser, TopPopDenoiser, UpperBoundOnValDenoiser,
};
pub use campaign::{run_campaign, Campaign, CampaignConfig};
pub use context::{build_context, build_fewshot_examples, ContextNeeds, ContextOptions};
pub use gate::apply_and_gate;

use crate::scorer::ScoreError;

/// An item index with its display title, when the catalog has one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitledItem {
    pub item: usize,
    pub title: Option<String>,
}

/// One single-item removal and its effect on the exemplar candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarRemoval {
    pub item: TitledItem,
    pub rank_before: usize,
    pub rank_after: usize,
}

/// Best and worst single removals measured against the second validation
/// item; shown to few-shot prompts as a worked example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub candidate: TitledItem,
    pub best: ExemplarRemoval,
    pub worst: ExemplarRemoval,
}

/// Everything a denoiser sees for one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user: usize,
    /// Full training row, sorted.
    pub profile: Vec<usize>,
    /// Most recent training items, oldest first.
    pub window: Vec<TitledItem>,
    /// Validation item whose rank the removal should improve.
    pub candidate: TitledItem,
    pub candidate_rank: usize,
    pub examples: Option<FewShotExemplar>,
    pub top_recs: Option<Vec<TitledItem>>,
    /// Model name used verbatim in prompts.
    pub model_name: String,
}

impl UserContext {
    pub fn window_items(&self) -> Vec<usize> {
        self.window.iter().map(|w| w.item).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemRef {
    /// Resolved window item.
    Item(usize),
    /// Text that could not be resolved to a window item.
    Text(String),
}

impl ItemRef {
    pub fn item(&self) -> Option<usize> {
        match self {
            ItemRef::Item(i) => Some(*i),
            ItemRef::Text(_) => None,
        }
    }
}

/// Error class of a proposal. Formatting takes precedence over
/// hallucination, so every proposal carries exactly one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalError {
    None,
    Formatting,
    Hallucination,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalSource {
    pub denoiser: String,
    pub run: u32,
    /// Raw model response, for text-based denoisers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Set when the request never produced a response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalProposal {
    pub removals: Vec<ItemRef>,
    pub source: ProposalSource,
    pub error: ProposalError,
}

impl RemovalProposal {
    pub fn valid(denoiser: &str, run: u32, items: Vec<usize>) -> Self {
        RemovalProposal {
            removals: items.into_iter().map(ItemRef::Item).collect(),
            source: ProposalSource {
                denoiser: denoiser.to_string(),
                run,
                response: None,
                transport_error: None,
            },
            error: ProposalError::None,
        }
    }

    /// Resolved item indices; `None` if any removal is unresolved.
    pub fn items(&self) -> Option<Vec<usize>> {
        self.removals.iter().map(ItemRef::item).collect()
    }
}

/// The gated result for one (user, run).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiseOutcome {
    pub user: usize,
    pub run: u32,
    pub proposal: RemovalProposal,
    pub rank_before: usize,
    /// Validation rank with the removals applied; equals `rank_before` when
    /// the proposal carried an error.
    pub rank_after: usize,
    pub accepted: bool,
    /// Training row used at test time.
    pub final_profile: Vec<usize>,
}

impl DenoiseOutcome {
    /// Validation rank of the profile actually kept.
    pub fn final_rank(&self) -> usize {
        if self.accepted {
            self.rank_after
        } else {
            self.rank_before
        }
    }
}

/// A removal policy. Implementations never fail: bad model output is
/// reported through [`RemovalProposal::error`].
pub trait Denoiser: Send + Sync {
    fn id(&self) -> &str;

    /// Stochastic denoisers are run several times per user.
    fn is_stochastic(&self) -> bool {
        false
    }

    fn needs(&self) -> ContextNeeds {
        ContextNeeds::default()
    }

    /// Proposes `k` window items to remove. Randomness, if any, derives from
    /// `(seed, ctx.user, run)`.
    fn propose(&self, ctx: &UserContext, k: usize, seed: u64, run: u32) -> RemovalProposal;

    /// A failure that retrying cannot fix (bad credentials, unknown model).
    /// Checked once the campaign finishes; a set value aborts it.
    fn fatal_error(&self) -> Option<String> {
        None
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn is_stochastic(&self) -> bool {
        (**self).is_stochastic()
    }
    fn needs(&self) -> ContextNeeds {
        (**self).needs()
    }
    fn propose(&self, ctx: &UserContext, k: usize, seed: u64, run: u32) -> RemovalProposal {
        (**self).propose(ctx, k, seed, run)
    }
    fn fatal_error(&self) -> Option<String> {
        (**self).fatal_error()
    }
}

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("removal count must be 1 or 2 and smaller than the window ({window}), got {k}")]
    InvalidK { k: usize, window: usize },
    #[error("runs must be >= 1")]
    InvalidRuns,
    #[error("user {0} is not in the split")]
    UnknownUser(usize),
    #[error("item `{item_id}` has no title; prompts need titles for every window, candidate and recommended item")]
    MissingTitle { item_id: String },
    #[error("denoiser `{denoiser}` failed: {message}")]
    Denoiser { denoiser: String, message: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}
