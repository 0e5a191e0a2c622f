use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataset::SplitDataset;
use crate::denoise::{build_context, upper_bound_on_val_k, ContextNeeds, ContextOptions};
use crate::llm::{ChatBackend, ChatExchange, ChatRequest, ChatResponse, LlmDenoiser, LlmError, PromptSpec, PromptVariant};
use crate::rng::seeded_rng;
use crate::scorer::Scorer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockMode {
    /// Answers with the exhaustive validation-rank search's choice.
    Oracle,
    /// A uniformly random window item, well formatted.
    ValidRandom,
    Malformed,
    /// Well formatted, never in the window.
    Hallucinating,
    /// Replays a fixture keyed by (user, run).
    Scripted,
}

impl std::str::FromStr for MockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown mock mode `{s}` (oracle, valid-random, malformed, hallucinating, scripted)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub user: usize,
    pub run: u32,
    pub response: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Script(pub HashMap<(usize, u32), String>);

impl Script {
    pub fn from_lines(lines: impl IntoIterator<Item = ScriptLine>) -> Self {
        Script(lines.into_iter().map(|l| ((l.user, l.run), l.response)).collect())
    }

    pub fn get(&self, user: usize, run: u32) -> Option<&str> {
        self.0.get(&(user, run)).map(String::as_str)
    }

    pub fn lines(&self) -> Vec<ScriptLine> {
        let mut keys: Vec<_> = self.0.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|(user, run)| ScriptLine {
                user,
                run,
                response: self.0[&(user, run)].clone(),
            })
            .collect()
    }

    pub fn read_jsonl(path: &Path) -> std::io::Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = Vec::new();
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        Ok(Self::from_lines(lines))
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for l in self.lines() {
            writeln!(out, "{}", serde_json::to_string(&l).map_err(std::io::Error::other)?)?;
        }
        out.flush()
    }
}

fn bracket<S: AsRef<str>>(titles: &[S]) -> String {
    titles.iter().map(|t| format!("[{}]", t.as_ref())).collect::<Vec<_>>().join(", ")
}

/// In-process chat backend that reads the user and run from request
/// metadata and answers according to its mode.
pub struct MockBackend {
    mode: MockMode,
    k: usize,
    seed: u64,
    split: Arc<SplitDataset>,
    scorer: Option<Arc<dyn Scorer>>,
    script: Script,
}

impl MockBackend {
    pub fn new(
        mode: MockMode,
        k: usize,
        seed: u64,
        split: Arc<SplitDataset>,
        scorer: Option<Arc<dyn Scorer>>,
    ) -> Result<Self, LlmError> {
        if mode == MockMode::Oracle && scorer.is_none() {
            return Err(LlmError::InvalidSpec("oracle mock needs a scorer".into()));
        }
        Ok(MockBackend {
            mode,
            k,
            seed,
            split,
            scorer,
            script: Script::default(),
        })
    }

    pub fn scripted(script: Script, split: Arc<SplitDataset>) -> Self {
        MockBackend {
            mode: MockMode::Scripted,
            k: 1,
            seed: 0,
            split,
            scorer: None,
            script,
        }
    }

    fn title(&self, item: usize) -> &str {
        self.split.title(item).unwrap_or("")
    }

    pub fn respond(&self, user: usize, run: u32) -> Result<String, LlmError> {
        if user >= self.split.n_users() {
            return Err(LlmError::Script(format!("unknown user {user}")));
        }
        Ok(match self.mode {
            MockMode::Oracle => {
                let scorer = self.scorer.as_ref().expect("checked at construction");
                let ctx = build_context(&self.split, user, scorer, ContextNeeds::default(), &ContextOptions::default())
                    .map_err(|e| LlmError::Script(e.to_string()))?;
                let (set, _) = upper_bound_on_val_k(&ctx, self.k, scorer).map_err(|e| LlmError::Script(e.to_string()))?;
                bracket(&set.iter().map(|&i| self.title(i)).collect::<Vec<_>>())
            }
            MockMode::ValidRandom => {
                let mut rng = seeded_rng(self.seed, &[user as u64, run as u64, 0x7a11d]);
                let picks: Vec<&str> = self
                    .split
                    .prompt_window(user)
                    .choose_multiple(&mut rng, self.k)
                    .map(|&i| self.title(i))
                    .collect();
                bracket(&picks)
            }
            MockMode::Malformed => "I cannot decide.".to_string(),
            MockMode::Hallucinating => {
                let names: Vec<String> = (0..self.k).map(|n| format!("Unlisted Feature {user}-{run}-{n}")).collect();
                bracket(&names)
            }
            MockMode::Scripted => self
                .script
                .get(user, run)
                .ok_or_else(|| LlmError::Script(format!("script has no response for user {user}, run {run}")))?
                .to_string(),
        })
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let (user, run) = request
            .meta()
            .ok_or_else(|| LlmError::Script("request carries no user/run metadata".into()))?;
        Ok(ChatExchange {
            request: request.clone(),
            response: Some(ChatResponse {
                text: self.respond(user, run)?,
                finish_reason: Some("stop".into()),
                latency_ms: 0.0,
            }),
            attempts: 1,
            failure: None,
        })
    }
}

/// Wraps a mock backend in the real prompt/parse path.
pub fn mock_denoiser(
    id: impl Into<String>,
    backend: MockBackend,
    variant: PromptVariant,
    domain_label: &str,
) -> LlmDenoiser {
    let spec = PromptSpec::new(variant, backend.k, domain_label);
    LlmDenoiser::new(id, spec, "mock", Box::new(backend))
}

/// A script over `users x runs` with exact shares of valid, malformed and
/// hallucinated answers (`shares` in percent, summing to 100). Slots are
/// assigned by a seeded shuffle.
pub fn mixed_script(
    split: &SplitDataset,
    users: &[usize],
    runs: u32,
    k: usize,
    shares: [usize; 3],
    seed: u64,
) -> Result<Script, LlmError> {
    if shares.iter().sum::<usize>() != 100 {
        return Err(LlmError::InvalidSpec(format!("shares {shares:?} do not sum to 100")));
    }
    let mut slots: Vec<(usize, u32)> = users.iter().flat_map(|&u| (0..runs).map(move |r| (u, r))).collect();
    let counts = crate::dataset::allocate(&shares, slots.len());
    slots.shuffle(&mut seeded_rng(seed, &[0x5c41]));
    let mut lines = Vec::with_capacity(slots.len());
    for (n, (user, run)) in slots.into_iter().enumerate() {
        let class = if n < counts[0] {
            0
        } else if n < counts[0] + counts[1] {
            1
        } else {
            2
        };
        let mut rng = seeded_rng(seed, &[user as u64, run as u64]);
        let response = match class {
            0 => {
                let picks: Vec<&str> = split
                    .prompt_window(user)
                    .choose_multiple(&mut rng, k)
                    .map(|&i| split.title(i).unwrap_or(""))
                    .collect();
                format!("Removal: {}", bracket(&picks))
            }
            1 => "The user seems to enjoy most of these; hard to say.".to_string(),
            _ => bracket(&(0..k).map(|n| format!("Citizen Kane Returns {}", n + 2)).collect::<Vec<_>>()),
        };
        lines.push(ScriptLine { user, run, response });
    }
    Ok(Script::from_lines(lines))
}
