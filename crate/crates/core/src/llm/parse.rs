use std::sync::LazyLock;

use regex::Regex;

use crate::denoise::{ItemRef, ProposalError, ProposalSource, RemovalProposal, TitledItem};

static THINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<think(?:ing)?>.*?</think(?:ing)?>").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*```[A-Za-z0-9_-]*\s*$").unwrap());
static REMOVAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)removals?\s*:").unwrap());
static GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]]*)\]").unwrap());

/// Folds case, drops punctuation and collapses whitespace. Matching against
/// window titles is exact on the folded form.
pub fn normalize_title(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap_or(c) } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Strips reasoning blocks, code fences, emphasis markers and anything
/// before the last "Removal:" label.
pub fn clean_response(text: &str) -> String {
    let text = THINK.replace_all(text, " ");
    // an unterminated reasoning block leaves only what follows its close
    let text = match text.rfind("</think>") {
        Some(p) => &text[p + "</think>".len()..],
        None => &text[..],
    };
    let text = FENCE.replace_all(text, "");
    let text = text.replace("**", "").replace('`', "");
    let tail = match REMOVAL.find_iter(&text).last() {
        Some(m) => &text[m.end()..],
        None => &text[..],
    };
    tail.trim().to_string()
}

fn resolve(piece: &str, window: &[(String, usize)]) -> Option<usize> {
    let key = normalize_title(piece);
    window.iter().find(|(t, _)| *t == key).map(|&(_, i)| i)
}

enum Extracted {
    Items(Vec<usize>),
    Unresolved(Vec<String>),
    Malformed,
}

/// Reads a single bracket group as exactly `k` titles, allowing commas
/// inside titles. A split where every part resolves wins; failing that,
/// a comma-separated group of the right size is an off-window answer.
fn split_group(group: &str, k: usize, window: &[(String, usize)]) -> Extracted {
    if k == 1 {
        if let Some(i) = resolve(group, window) {
            return Extracted::Items(vec![i]);
        }
    }
    let pieces: Vec<&str> = group.split(',').collect();
    if k == 2 {
        for cut in 1..pieces.len() {
            let (a, b) = (pieces[..cut].join(","), pieces[cut..].join(","));
            if let (Some(x), Some(y)) = (resolve(&a, window), resolve(&b, window)) {
                return Extracted::Items(vec![x, y]);
            }
        }
    }
    if pieces.len() > 1 && pieces.iter().all(|p| resolve(p, window).is_some()) {
        // a list of valid titles of the wrong length
        return if pieces.len() == k {
            Extracted::Items(pieces.iter().map(|p| resolve(p, window).unwrap()).collect())
        } else {
            Extracted::Malformed
        };
    }
    match (k, pieces.len()) {
        (1, _) => Extracted::Unresolved(vec![group.trim().to_string()]),
        (2, 2) => Extracted::Unresolved(pieces.iter().map(|p| p.trim().to_string()).collect()),
        _ => Extracted::Malformed,
    }
}

/// Maps free text to a proposal. Never fails: the outcome is classified
/// as none, formatting or hallucination, with formatting checked first.
pub fn parse_response(text: &str, window: &[TitledItem], k: usize, source: ProposalSource) -> RemovalProposal {
    let folded: Vec<(String, usize)> = window
        .iter()
        .filter_map(|t| t.title.as_deref().map(|s| (normalize_title(s), t.item)))
        .collect();
    let cleaned = clean_response(text);
    let groups: Vec<String> = GROUP
        .captures_iter(&cleaned)
        .map(|c| c[1].trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
        .collect();

    let formatting = |source| RemovalProposal {
        removals: Vec::new(),
        source,
        error: ProposalError::Formatting,
    };

    let extracted = match groups.len() {
        0 => Extracted::Malformed,
        n if k == 2 && n >= 2 => {
            let last = &groups[n - 2..];
            let refs: Vec<ItemRef> = last
                .iter()
                .map(|g| resolve(g, &folded).map_or_else(|| ItemRef::Text(g.clone()), ItemRef::Item))
                .collect();
            match refs.iter().map(ItemRef::item).collect::<Option<Vec<_>>>() {
                Some(items) => Extracted::Items(items),
                None => Extracted::Unresolved(last.to_vec()),
            }
        }
        n => split_group(&groups[n - 1], k, &folded),
    };

    match extracted {
        Extracted::Malformed => formatting(source),
        Extracted::Unresolved(texts) => {
            if texts.iter().any(|t| normalize_title(t).is_empty()) {
                return formatting(source);
            }
            RemovalProposal {
                removals: texts
                    .iter()
                    .map(|t| resolve(t, &folded).map_or_else(|| ItemRef::Text(t.clone()), ItemRef::Item))
                    .collect(),
                source,
                error: ProposalError::Hallucination,
            }
        }
        Extracted::Items(items) => {
            let mut distinct = items.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if items.len() != k || distinct.len() != k {
                return formatting(source);
            }
            RemovalProposal {
                removals: items.into_iter().map(ItemRef::Item).collect(),
                source,
                error: ProposalError::None,
            }
        }
    }
}
