//! Chat-completion backends behind one trait: an OpenAI-compatible HTTP
//! client, a deterministic offline stub, and record/replay wrappers.

mod http;
mod null;
pub mod prompts;
mod replay;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpChat, RetryPolicy};
pub use null::NullChat;
pub use replay::{RecordingChat, ReplayChat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Io(String),
}

/// What a request is for; the offline backend dispatches on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    NlGeneration,
    NlVerification,
    SchemaStandardization,
    PairRefinement,
    ReasoningStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub task: TaskKind,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
}

impl ChatRequest {
    /// Stable identity of a request, used to key recorded responses.
    pub fn key(&self) -> String {
        let text = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

impl<T: ChatModel + ?Sized> ChatModel for Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Http,
    #[default]
    Null,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: Backend,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable that holds the key; never the key itself.
    pub api_key_env: String,
    pub max_concurrency: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub temperature: f32,
    pub replay_file: Option<PathBuf>,
    /// When set, every response is also written here in replay format.
    pub record_file: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Null,
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_concurrency: 4,
            timeout_secs: 60,
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            temperature: 0.7,
            replay_file: None,
            record_file: None,
        }
    }
}

/// A configured backend, plus the recorder when recording is on.
pub struct Client {
    pub model: Arc<dyn ChatModel>,
    pub recorder: Option<Arc<RecordingChat<Arc<dyn ChatModel>>>>,
    pub temperature: f32,
}

impl Client {
    pub fn from_config(cfg: &LlmConfig) -> Result<Self, LlmError> {
        let base: Arc<dyn ChatModel> = match cfg.backend {
            Backend::Null => Arc::new(NullChat),
            Backend::Replay => {
                let path = cfg
                    .replay_file
                    .as_ref()
                    .ok_or_else(|| LlmError::Io("replay backend needs `replay_file`".into()))?;
                Arc::new(ReplayChat::load(path)?)
            }
            Backend::Http => Arc::new(HttpChat::from_config(cfg)?),
        };
        let (model, recorder) = match &cfg.record_file {
            Some(_) => {
                let rec = Arc::new(RecordingChat::new(base));
                (rec.clone() as Arc<dyn ChatModel>, Some(rec))
            }
            None => (base, None),
        };
        Ok(Self {
            model,
            recorder,
            temperature: cfg.temperature,
        })
    }

    pub fn offline() -> Self {
        Self {
            model: Arc::new(NullChat),
            recorder: None,
            temperature: 0.0,
        }
    }

    pub fn save_recording(&self, cfg: &LlmConfig) -> Result<(), LlmError> {
        if let (Some(rec), Some(path)) = (&self.recorder, &cfg.record_file) {
            rec.save(path)?;
        }
        Ok(())
    }
}

/// Fenced block that carries a prompt's machine-readable input.
pub const PAYLOAD_FENCE: &str = "```json";

/// Append a machine-readable copy of the prompt's input.
pub fn with_payload(prompt: &str, payload: &serde_json::Value) -> String {
    format!(
        "{prompt}\n\nInput (JSON):\n{PAYLOAD_FENCE}\n{}\n```\n",
        serde_json::to_string(payload).expect("payload serializes")
    )
}

/// The last fenced JSON block of a prompt.
pub fn extract_payload(prompt: &str) -> Option<serde_json::Value> {
    let start = prompt.rfind(PAYLOAD_FENCE)? + PAYLOAD_FENCE.len();
    let end = prompt[start..].find("```")? + start;
    serde_json::from_str(prompt[start..end].trim()).ok()
}

/// First JSON value in a model response, with or without code fences.
pub fn extract_json(text: &str) -> Result<serde_json::Value, LlmError> {
    let body = match text.find("```") {
        Some(i) => {
            let rest = &text[i + 3..];
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            match rest.find("```") {
                Some(j) => &rest[..j],
                None => rest,
            }
        }
        None => text,
    };
    let start = body
        .find(['{', '['])
        .ok_or_else(|| LlmError::Malformed("no JSON in response".into()))?;
    let mut de = serde_json::Deserializer::from_str(&body[start..]).into_iter::<serde_json::Value>();
    match de.next() {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(LlmError::Malformed(e.to_string())),
        None => Err(LlmError::Malformed("empty response".into())),
    }
}
