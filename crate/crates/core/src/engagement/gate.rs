//! The approval gate.
//!
//! A transport only accepts an [`ApprovedMessage`], and the only constructor
//! is private to this crate: the engine builds one from a draft whose logged
//! status is already approved.

use serde::{Deserialize, Serialize};

use crate::domain::{ChatMessage, Timestamp};

/// Operator name recorded for decisions taken by the auto-approve policy.
pub const AUTO_APPROVE_OPERATOR: &str = "auto-approve";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorAction {
    Approve,
    Edit { text: String },
    Reject,
    Terminate,
}

impl OperatorAction {
    pub fn releases_draft(&self) -> bool {
        matches!(self, OperatorAction::Approve | OperatorAction::Edit { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovedMessage {
    conversation_id: String,
    draft_id: String,
    text: String,
    decided_by: String,
}

impl ApprovedMessage {
    pub(crate) fn new(conversation_id: &str, draft_id: &str, text: &str, decided_by: &str) -> Self {
        Self {
            conversation_id: conversation_id.to_string(),
            draft_id: draft_id.to_string(),
            text: text.to_string(),
            decided_by: decided_by.to_string(),
        }
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    pub fn draft_id(&self) -> &str {
        &self.draft_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn decided_by(&self) -> &str {
        &self.decided_by
    }
}

/// What a reviewer sees in the queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingDraft {
    pub draft_id: String,
    pub conversation_id: String,
    pub actor_id: String,
    pub text: String,
    /// The last few messages of the conversation, oldest first.
    pub context: Vec<ChatMessage>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub draft_id: String,
    pub conversation_id: String,
    pub sequence: u64,
    /// Set when the decision released a message to the transport.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_message_id: Option<String>,
}
