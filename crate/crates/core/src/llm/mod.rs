//! Chat-completion adapter boundary.
//!
//! Every model interaction (synonym expansion, relevance judgment, reply
//! drafting) goes through [`ChatModel`]. Tests and the simulator use
//! [`ScriptedModel`] or [`RuleModel`]; a generic OpenAI-compatible HTTP
//! client lives behind the `openai` feature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "openai")]
mod openai;
mod rule;
mod scripted;

#[cfg(feature = "openai")]
pub use openai::{OpenAiCompatConfig, OpenAiCompatModel};
pub use rule::RuleModel;
pub use scripted::{ScriptFile, Scripted, ScriptedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

impl ChatTurn {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// What a request is for. Never sent over the wire; lets offline models
/// route without parsing prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Synonyms,
    Relevance,
    Draft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub purpose: Purpose,
    pub messages: Vec<ChatTurn>,
    pub temperature: f32,
}

impl ChatRequest {
    pub fn new(purpose: Purpose, messages: Vec<ChatTurn>) -> Self {
        Self { purpose, messages, temperature: 0.7 }
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    /// Content of the last user turn, or "" if there is none.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.content.as_str())
            .unwrap_or("")
    }

    /// All turn contents joined; handy for assertions on what the model saw.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|t| t.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub content: String,
    /// Set when the backend itself signals a refusal (e.g. a `refusal` field
    /// or a content-filter finish reason).
    #[serde(default)]
    pub refusal: bool,
}

impl ChatReply {
    pub fn text(content: impl Into<String>) -> Self {
        Self { content: content.into(), refusal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("model adapter unavailable: {0}")]
    Unavailable(String),
    #[error("model backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed model response: {0}")]
    Malformed(String),
    #[error("model configuration: {0}")]
    Config(String),
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, LlmError>;

    fn name(&self) -> &str;
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Phrase-based refusal detection, used when the adapter gives no flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalDetector {
    pub phrases: Vec<String>,
}

impl Default for RefusalDetector {
    fn default() -> Self {
        let phrases = [
            "i'm sorry, but i can't",
            "i’m sorry, but i can’t",
            "i am sorry, but i cannot",
            "i can't assist",
            "i cannot assist",
            "i can't help with",
            "i cannot help with",
            "i'm not able to help",
            "i am not able to help",
            "i won't be able to help",
            "i can't comply",
            "i cannot comply",
            "i can't engage",
            "i cannot engage",
            "i'm unable to",
            "as an ai language model",
            "我不能",
            "我无法",
            "抱歉，我不能",
        ];
        Self { phrases: phrases.iter().map(|p| p.to_string()).collect() }
    }
}

impl RefusalDetector {
    pub fn is_refusal(&self, reply: &ChatReply) -> bool {
        if reply.refusal {
            return true;
        }
        let lower = reply.content.to_lowercase();
        self.phrases.iter().any(|p| lower.contains(&p.to_lowercase()))
    }
}
