//! Prompting a chat model for removals: prompt rendering, the
//! chat-completions client, response parsing and the denoiser wrapper.

mod client;
pub mod mock_server;
mod parse;
mod prompt;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{
    ChatBackend, ChatExchange, ChatMessage, ChatRequest, ChatResponse, HttpChatClient, RequestMeta, RetryPolicy,
};
pub use parse::{clean_response, normalize_title, parse_response};
pub use prompt::{build_prompt, PromptSpec, PromptVariant};

use crate::denoise::{ContextNeeds, Denoiser, ProposalError, ProposalSource, RemovalProposal, UserContext};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("item index {item} has no title")]
    MissingTitle { item: usize },
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    /// Non-retryable endpoint rejection (auth, bad model, bad request).
    #[error("endpoint rejected the request: {0}")]
    Endpoint(String),
    #[error("{0}")]
    Script(String),
}

/// Request/response pair for one (user, run), kept for auditing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub user: usize,
    pub run: u32,
    pub exchange: ChatExchange,
}

/// A [`Denoiser`] backed by a chat model.
pub struct LlmDenoiser {
    id: String,
    spec: PromptSpec,
    model: String,
    overrides: serde_json::Map<String, serde_json::Value>,
    backend: Box<dyn ChatBackend>,
    transcripts: Mutex<Vec<Transcript>>,
    fatal: Mutex<Option<String>>,
}

impl LlmDenoiser {
    pub fn new(id: impl Into<String>, spec: PromptSpec, model: impl Into<String>, backend: Box<dyn ChatBackend>) -> Self {
        LlmDenoiser {
            id: id.into(),
            spec,
            model: model.into(),
            overrides: Default::default(),
            backend,
            transcripts: Mutex::new(Vec::new()),
            fatal: Mutex::new(None),
        }
    }

    pub fn with_overrides(mut self, overrides: serde_json::Map<String, serde_json::Value>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn spec(&self) -> &PromptSpec {
        &self.spec
    }

    /// Drains recorded exchanges in (user, run) order.
    pub fn take_transcripts(&self) -> Vec<Transcript> {
        let mut t = std::mem::take(&mut *self.transcripts.lock().unwrap());
        t.sort_by_key(|t| (t.user, t.run));
        t
    }

    fn failed(&self, run: u32, why: String, fatal: bool) -> RemovalProposal {
        if fatal {
            self.fatal.lock().unwrap().get_or_insert_with(|| why.clone());
        }
        RemovalProposal {
            removals: Vec::new(),
            source: ProposalSource {
                denoiser: self.id.clone(),
                run,
                response: None,
                transport_error: Some(why),
            },
            error: ProposalError::Formatting,
        }
    }
}

impl Denoiser for LlmDenoiser {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn needs(&self) -> ContextNeeds {
        ContextNeeds {
            examples: self.spec.variant == PromptVariant::FewShot,
            top_recs: self.spec.variant == PromptVariant::ZeroShotRecs,
            titles: true,
        }
    }

    fn propose(&self, ctx: &UserContext, k: usize, _seed: u64, run: u32) -> RemovalProposal {
        let spec = PromptSpec { k, ..self.spec.clone() };
        let prompt = match build_prompt(&spec, ctx) {
            Ok(p) => p,
            Err(e) => return self.failed(run, e.to_string(), true),
        };
        let mut request = ChatRequest::user_prompt(&self.model, prompt);
        request.metadata = Some(RequestMeta {
            user: ctx.user.to_string(),
            run: run.to_string(),
        });
        request.overrides = self.overrides.clone();

        let exchange = match self.backend.complete(&request) {
            Ok(x) => x,
            Err(e) => return self.failed(run, e.to_string(), true),
        };
        let reply = exchange.response.as_ref().map(|r| r.text.clone());
        let failure = exchange.failure.clone();
        self.transcripts.lock().unwrap().push(Transcript {
            user: ctx.user,
            run,
            exchange,
        });
        match reply {
            None => self.failed(run, failure.unwrap_or_else(|| "no response".into()), false),
            Some(text) => {
                let source = ProposalSource {
                    denoiser: self.id.clone(),
                    run,
                    response: Some(text.clone()),
                    transport_error: None,
                };
                parse_response(&text, &ctx.window, k, source)
            }
        }
    }

    fn fatal_error(&self) -> Option<String> {
        self.fatal.lock().unwrap().clone()
    }
}
