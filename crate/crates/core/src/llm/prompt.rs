use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::denoise::{TitledItem, UserContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    ZeroShot,
    FewShot,
    ZeroShotRecs,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 3] = [PromptVariant::ZeroShot, PromptVariant::FewShot, PromptVariant::ZeroShotRecs];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::ZeroShot => "zero_shot",
            PromptVariant::FewShot => "few_shot",
            PromptVariant::ZeroShotRecs => "zero_shot_recs",
        }
    }
}

impl std::str::FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown prompt variant `{s}` (expected zero_shot, few_shot or zero_shot_recs)"))
    }
}

/// Template parameters. The model label comes from the context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub variant: PromptVariant,
    pub k: usize,
    /// Domain word, e.g. "movie".
    pub domain_label: String,
}

impl PromptSpec {
    pub fn new(variant: PromptVariant, k: usize, domain_label: impl Into<String>) -> Self {
        PromptSpec {
            variant,
            k,
            domain_label: domain_label.into(),
        }
    }
}

fn title<'a>(t: &'a TitledItem) -> Result<&'a str, LlmError> {
    t.title.as_deref().ok_or(LlmError::MissingTitle { item: t.item })
}

fn title_list(items: &[TitledItem]) -> Result<String, LlmError> {
    Ok(items.iter().map(|t| title(t)).collect::<Result<Vec<_>, _>>()?.join(", "))
}

/// Renders the cleaning prompt. Pure: the same spec and context always give
/// the same text.
pub fn build_prompt(spec: &PromptSpec, ctx: &UserContext) -> Result<String, LlmError> {
    if !(1..=2).contains(&spec.k) {
        return Err(LlmError::InvalidSpec(format!("k must be 1 or 2, got {}", spec.k)));
    }
    let model = &ctx.model_name;
    let mut out = String::new();
    write!(
        out,
        "You will help in cleaning the user historical interactions in the context of a recommender system in the {} domain. \
         Given the user history, a candidate item and its rank (lower rank is better) by {model} in the format:\n\n\
         [user history] - [candidate] - [rank]\n\n",
        spec.domain_label
    )
    .unwrap();
    if spec.k == 1 {
        write!(
            out,
            "remove only 1 item from the user history that would make {model} rank the respective candidate lowest/best. \
             List only the item to be removed from the user history in the format [item1] and nothing else. \
             The removed item must be present in the user history.\n\n"
        )
        .unwrap();
    } else {
        write!(
            out,
            "remove only 2 items from the user history that would make {model} rank the respective candidate lowest/best. \
             List only the items to be removed from the user history in the format [item1], [item2] and nothing else. \
             The removed items must be present in the user history.\n\n"
        )
        .unwrap();
    }

    let history = title_list(&ctx.window)?;
    match spec.variant {
        PromptVariant::ZeroShot => {}
        PromptVariant::FewShot => {
            let e = ctx
                .examples
                .as_ref()
                .ok_or_else(|| LlmError::InvalidSpec("few_shot prompt without exemplar".into()))?;
            writeln!(out, "Example:").unwrap();
            writeln!(out, "[{history}] - [{}] - [{}]", title(&e.candidate)?, e.best.rank_before).unwrap();
            for (label, r) in [("Best", &e.best), ("Worst", &e.worst)] {
                writeln!(
                    out,
                    "{label} removal: [{}] (rank {} -> {})",
                    title(&r.item)?,
                    r.rank_before,
                    r.rank_after
                )
                .unwrap();
            }
            out.push('\n');
        }
        PromptVariant::ZeroShotRecs => {
            let recs = ctx
                .top_recs
                .as_ref()
                .ok_or_else(|| LlmError::InvalidSpec("zero_shot_recs prompt without recommendations".into()))?;
            writeln!(out, "Top-{} recommendations: [{}]\n", recs.len(), title_list(recs)?).unwrap();
        }
    }
    writeln!(out, "[{history}] - [{}] - [{}]\n", title(&ctx.candidate)?, ctx.candidate_rank).unwrap();
    out.push_str("Removal:");
    Ok(out)
}
