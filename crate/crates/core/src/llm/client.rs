use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::rng::seeded_rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request metadata, sent as strings so OpenAI-style servers accept it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub user: String,
    pub run: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RequestMeta>,
    /// Decoding overrides (temperature, top_p, ...). Absent means provider
    /// defaults.
    #[serde(flatten)]
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

impl ChatRequest {
    pub fn user_prompt(model: &str, prompt: String) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            metadata: None,
            overrides: Default::default(),
        }
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }

    pub fn meta(&self) -> Option<(usize, u32)> {
        let m = self.metadata.as_ref()?;
        Some((m.user.parse().ok()?, m.run.parse().ok()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: Option<String>,
    pub latency_ms: f64,
}

/// One logical call, however many attempts it took.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: Option<ChatResponse>,
    pub attempts: u32,
    /// Last transport failure when `response` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Anything that turns a chat request into an exchange. Transport failures
/// are reported inside the exchange; `Err` is reserved for configuration
/// problems that retrying cannot fix.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, LlmError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let start = Instant::now();
        let text = self(request)?;
        Ok(ChatExchange {
            request: request.clone(),
            response: Some(ChatResponse {
                text,
                finish_reason: Some("stop".into()),
                latency_ms: start.elapsed().as_secs_f64() * 1e3,
            }),
            attempts: 1,
            failure: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
    pub jitter_seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            timeout_secs: 120,
            jitter_seed: 0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`: exponential in the attempt
    /// number, scaled by a seeded factor in [0.5, 1).
    pub fn delay(&self, attempt: u32, salt: u64) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << (attempt - 1).min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let mut rng = seeded_rng(self.jitter_seed, &[salt, attempt as u64]);
        Duration::from_secs_f64(capped * rng.random_range(0.5..1.0) / 1e3)
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpChatClient {
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

enum Attempt {
    Done(String, Option<String>),
    Retry(String),
}

impl HttpChatClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(retry.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            retry,
            agent,
        }
    }

    /// Endpoint from `OPENAI_BASE_URL` (default the OpenAI API) and key from
    /// `OPENAI_API_KEY`.
    pub fn from_env(retry: RetryPolicy) -> Self {
        let base = std::env::var("OPENAI_BASE_URL").unwrap_or_else(|_| "https://api.openai.com".into());
        Self::new(base, std::env::var("OPENAI_API_KEY").ok(), retry)
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches("/v1");
        format!("{base}/v1/chat/completions")
    }

    fn attempt(&self, request: &ChatRequest) -> Result<Attempt, LlmError> {
        let mut req = self.agent.post(self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(request) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string();
        if status == 429 || status >= 500 {
            return Ok(Attempt::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = body.unwrap_or_default();
            return Err(LlmError::Endpoint(format!("HTTP {status}: {}", detail.trim())));
        }
        let body = match body {
            Ok(b) => b,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        match serde_json::from_str::<WireResponse>(&body) {
            Ok(mut w) if !w.choices.is_empty() => {
                let choice = w.choices.swap_remove(0);
                Ok(Attempt::Done(choice.message.content.unwrap_or_default(), choice.finish_reason))
            }
            Ok(_) => Ok(Attempt::Retry("response has no choices".into())),
            Err(e) => Ok(Attempt::Retry(format!("malformed response: {e}"))),
        }
    }
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let salt = request.meta().map_or(0, |(u, r)| ((u as u64) << 32) ^ r as u64);
        let mut failure = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            let start = Instant::now();
            match self.attempt(request)? {
                Attempt::Done(text, finish_reason) => {
                    return Ok(ChatExchange {
                        request: request.clone(),
                        response: Some(ChatResponse {
                            text,
                            finish_reason,
                            latency_ms: start.elapsed().as_secs_f64() * 1e3,
                        }),
                        attempts: attempt,
                        failure: None,
                    })
                }
                Attempt::Retry(why) => {
                    log::debug!("chat attempt {attempt} failed: {why}");
                    failure = why;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.delay(attempt, salt));
                    }
                }
            }
        }
        Ok(ChatExchange {
            request: request.clone(),
            response: None,
            attempts: self.retry.max_attempts.max(1),
            failure: Some(failure),
        })
    }
}
