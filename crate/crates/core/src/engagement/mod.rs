//! Supervised conversations with candidate accounts.
//!
//! Each session starts with a fixed opener, then alternates between model
//! drafts and operator decisions until a payment method is disclosed, the
//! other side goes quiet, the model keeps refusing, or an operator ends it.
//! All session state lives in the event store; the engine only decides which
//! events to append next.

mod engine;
mod gate;
mod prompt;
mod substitute;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::StoreError;
use crate::transport::TransportError;

pub use engine::{DriveOutcome, Engine, EngineParts, IngestResult};
pub use gate::{ApprovedMessage, DecisionAck, OperatorAction, PendingDraft, AUTO_APPROVE_OPERATOR};
pub use prompt::{DraftPrompts, PromptTier};
pub use substitute::{SubstitutionError, SubstitutionPair, SubstitutionTable};

pub const DEFAULT_OPENER: &str = "Hi, how much do your services cost?";

#[derive(Debug, Error)]
pub enum EngageError {
    #[error("actor {0} already has an active session")]
    DuplicateSession(String),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("unknown conversation {0}")]
    UnknownConversation(String),
    #[error("unknown draft {0}")]
    UnknownDraft(String),
    #[error("draft {0} was already decided")]
    StaleDraft(String),
    #[error("draft {0} has no approving decision")]
    NotApproved(String),
    #[error("conversation {0} is not awaiting approval")]
    NotPendingApproval(String),
    #[error("conversation {0} is terminated")]
    SessionTerminated(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngagementPolicy {
    pub opener_text: String,
    /// Consecutive failed drafting attempts tolerated before giving up.
    pub max_retries: u32,
    pub no_response_timeout_secs: u64,
    pub max_rounds: Option<u32>,
    pub auto_approve: bool,
    /// Quiet period after the latest inbound message before drafting, so a
    /// burst of messages gets one answer.
    pub compose_delay_secs: u64,
    /// Rejections of successive drafts tolerated before the session ends.
    pub regeneration_cap: u32,
    /// Messages of context shown with each pending draft.
    pub context_messages: usize,
}

impl Default for EngagementPolicy {
    fn default() -> Self {
        Self {
            opener_text: DEFAULT_OPENER.to_string(),
            max_retries: 3,
            no_response_timeout_secs: 72 * 3600,
            max_rounds: None,
            auto_approve: false,
            compose_delay_secs: 30,
            regeneration_cap: 5,
            context_messages: 10,
        }
    }
}

impl EngagementPolicy {
    pub fn validate(&self) -> Result<(), EngageError> {
        if self.opener_text.trim().is_empty() {
            return Err(EngageError::InvalidPolicy("opener_text is empty".into()));
        }
        if !(1..=3).contains(&self.max_retries) {
            return Err(EngageError::InvalidPolicy("max_retries must be between 1 and 3".into()));
        }
        if self.no_response_timeout_secs == 0 {
            return Err(EngageError::InvalidPolicy("no_response_timeout_secs must be positive".into()));
        }
        if self.max_rounds == Some(0) {
            return Err(EngageError::InvalidPolicy("max_rounds must be positive".into()));
        }
        Ok(())
    }

    pub fn no_response_timeout(&self) -> Duration {
        Duration::from_secs(self.no_response_timeout_secs)
    }
}
