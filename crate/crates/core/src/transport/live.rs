//! Placeholder for a real messaging network.
//!
//! No client protocol ships with this crate. The adapter exists so the
//! runtime can be wired against a real backend later without touching the
//! pipeline; until then every call reports the backend as unavailable.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{
    DeliveryReceipt, DirectoryQuery, History, InboundEvent, JoinConfirmation, SendTarget, Transport, TransportError,
    TransportKind,
};
use crate::domain::{ChannelHandle, Timestamp};
use crate::engagement::ApprovedMessage;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Name of the environment variable holding API credentials.
    #[serde(default)]
    pub credentials_env: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LiveTransport {
    config: LiveConfig,
}

impl LiveTransport {
    pub fn new(config: LiveConfig) -> Self {
        Self { config }
    }

    fn unavailable<T>(&self) -> Result<T, TransportError> {
        let why = match &self.config.credentials_env {
            None => "live transport is not configured".to_string(),
            Some(var) => format!("live transport has no client implementation (credentials in ${var})"),
        };
        Err(TransportError::BackendUnavailable(why))
    }
}

impl Transport for LiveTransport {
    fn kind(&self) -> TransportKind {
        TransportKind::Live
    }

    fn now(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Timestamp)
            .unwrap_or(0)
    }

    fn query_directory(&mut self, _query: &DirectoryQuery) -> Result<Vec<ChannelHandle>, TransportError> {
        self.unavailable()
    }

    fn join_channel(&mut self, _handle: &ChannelHandle) -> Result<JoinConfirmation, TransportError> {
        self.unavailable()
    }

    fn fetch_history(&mut self, _handle: &ChannelHandle, _limit: usize) -> Result<History, TransportError> {
        self.unavailable()
    }

    fn probe_actor(&mut self, _actor_id: &str) -> Result<bool, TransportError> {
        self.unavailable()
    }

    fn send_message(&mut self, _target: &SendTarget, _message: &ApprovedMessage) -> Result<DeliveryReceipt, TransportError> {
        self.unavailable()
    }

    fn poll_events(&mut self, _since: Timestamp) -> Vec<InboundEvent> {
        Vec::new()
    }

    fn advance_time(&mut self, _delta: Duration) -> Result<usize, TransportError> {
        Err(TransportError::NotSimulated)
    }

    fn next_timer_at(&self) -> Option<Timestamp> {
        None
    }
}
