//! Messaging backends.
//!
//! [`Transport`] is the only way the pipeline touches a messaging network.
//! [`Simnet`] is a deterministic discrete-event simulation driven by a
//! [`Scenario`]; [`LiveTransport`] is a stub with the same surface.

pub mod reference;
mod scenario;
mod simnet;
#[cfg(feature = "live")]
mod live;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ChannelHandle, ChatMessage, Timestamp};
use crate::engagement::ApprovedMessage;

#[cfg(feature = "live")]
pub use live::{LiveConfig, LiveTransport};
pub use scenario::{
    ChannelSpec, LatencySpec, MediaSpec, PersonaKind, PersonaSpec, PostSpec, ReplyMessage, Scenario, ScenarioError,
};
pub use simnet::{SentRecord, Simnet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown channel @{0}")]
    UnknownChannel(String),
    #[error("join rejected for @{0}")]
    JoinRejected(String),
    #[error("channel @{0} not joined")]
    NotJoined(String),
    #[error("blocked by {0}")]
    Blocked(String),
    #[error("unknown or unreachable account {0}")]
    UnknownTarget(String),
    #[error("cannot post into broadcast channel @{0}")]
    ReadOnlyChannel(String),
    #[error("operation only exists on a simulated backend")]
    NotSimulated,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Simnet,
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryQuery {
    pub keyword: String,
    pub max_results: usize,
}

impl DirectoryQuery {
    pub fn new(keyword: impl Into<String>, max_results: usize) -> Result<Self, TransportError> {
        let keyword = keyword.into();
        if keyword.trim().is_empty() {
            return Err(TransportError::InvalidQuery("empty keyword".into()));
        }
        if max_results == 0 {
            return Err(TransportError::InvalidQuery("max_results must be positive".into()));
        }
        Ok(Self { keyword, max_results })
    }

    /// Lowercased with whitespace runs collapsed; directory keys use this form.
    pub fn normalized(&self) -> String {
        normalize_keyword(&self.keyword)
    }
}

pub fn normalize_keyword(k: &str) -> String {
    k.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinConfirmation {
    pub handle: ChannelHandle,
    pub title: String,
    pub already_joined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Newest first.
    pub messages: Vec<ChatMessage>,
    pub pinned: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SendTarget {
    Actor(String),
    Channel(ChannelHandle),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub message_id: String,
    pub sent_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InboundEvent {
    pub conversation_id: String,
    pub actor_id: String,
    pub message: ChatMessage,
    /// Image payloads keyed by media id. Handed to OCR, never persisted.
    #[serde(default)]
    pub payloads: BTreeMap<String, String>,
    pub received_at: Timestamp,
    pub sequence: u64,
}

/// One logical messaging backend. Methods take `&mut self`: callers that
/// share a backend serialize their commands through a lock.
pub trait Transport: Send {
    fn kind(&self) -> TransportKind;

    fn now(&self) -> Timestamp;

    fn query_directory(&mut self, query: &DirectoryQuery) -> Result<Vec<ChannelHandle>, TransportError>;

    fn join_channel(&mut self, handle: &ChannelHandle) -> Result<JoinConfirmation, TransportError>;

    fn fetch_history(&mut self, handle: &ChannelHandle, limit: usize) -> Result<History, TransportError>;

    /// Whether an account exists and accepts direct messages.
    fn probe_actor(&mut self, actor_id: &str) -> Result<bool, TransportError>;

    /// Only approved messages can be handed to a backend.
    fn send_message(&mut self, target: &SendTarget, message: &ApprovedMessage) -> Result<DeliveryReceipt, TransportError>;

    /// Events with `received_at > since`, ordered by
    /// (received_at, conversation_id, sequence).
    fn poll_events(&mut self, since: Timestamp) -> Vec<InboundEvent>;

    fn advance_time(&mut self, delta: Duration) -> Result<usize, TransportError>;

    /// Earliest pending timer, if the backend is simulated and has one.
    fn next_timer_at(&self) -> Option<Timestamp>;
}
