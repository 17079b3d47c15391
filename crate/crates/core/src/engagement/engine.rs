use std::sync::Arc;
use std::time::Duration;

use super::gate::{ApprovedMessage, DecisionAck, OperatorAction, PendingDraft, AUTO_APPROVE_OPERATOR};
use super::prompt::{clean_draft, DraftPrompts, PromptTier};
use super::{EngageError, EngagementPolicy};
use crate::domain::{
    ChatMessage, Conversation, Direction, EngagementOutcome, MediaKind, OutcomeKind, SessionState, Timestamp,
};
use crate::llm::{ChatModel, RefusalDetector};
use crate::store::{DraftStatus, Event, EventStore};
use crate::transport::{DeliveryReceipt, InboundEvent, SendTarget, Transport, TransportError, TransportKind};
use crate::vision::{extract_payment, OcrService, PaymentPatterns};

/// The collaborators an engine needs besides its transport and store.
pub struct EngineParts {
    pub policy: EngagementPolicy,
    pub model: Arc<dyn ChatModel>,
    pub prompts: DraftPrompts,
    pub detector: RefusalDetector,
    pub ocr: OcrService,
    pub payments: PaymentPatterns,
}

impl EngineParts {
    pub fn new(policy: EngagementPolicy, model: Arc<dyn ChatModel>) -> Self {
        Self {
            policy,
            model,
            prompts: DraftPrompts::default(),
            detector: RefusalDetector::default(),
            ocr: OcrService::identity(),
            payments: PaymentPatterns::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestResult {
    Recorded,
    /// Already in the log, e.g. redelivered after a restart.
    Duplicate,
    Terminated(OutcomeKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveOutcome {
    /// Every session has terminated.
    Finished,
    /// Nothing can happen until an operator decides on these many drafts.
    AwaitingOperator(usize),
    /// The time limit was reached with work still scheduled.
    Horizon,
}

/// Runs engagement sessions over one transport and one event store.
///
/// Methods are not reentrant; callers sharing an engine serialize access,
/// which also serializes every conversation's events.
pub struct Engine {
    policy: EngagementPolicy,
    model: Arc<dyn ChatModel>,
    prompts: DraftPrompts,
    detector: RefusalDetector,
    ocr: OcrService,
    payments: PaymentPatterns,
    transport: Box<dyn Transport>,
    store: EventStore,
    cursor: Timestamp,
}

impl Engine {
    pub fn new(parts: EngineParts, transport: Box<dyn Transport>, store: EventStore) -> Result<Self, EngageError> {
        parts.policy.validate()?;
        if parts.policy.auto_approve && transport.kind() != TransportKind::Simnet {
            return Err(EngageError::InvalidPolicy("auto_approve is only allowed on the simulated network".into()));
        }
        Ok(Self {
            policy: parts.policy,
            model: parts.model,
            prompts: parts.prompts,
            detector: parts.detector,
            ocr: parts.ocr,
            payments: parts.payments,
            transport,
            store,
            cursor: Timestamp::MIN,
        })
    }

    pub fn policy(&self) -> &EngagementPolicy {
        &self.policy
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut EventStore {
        &mut self.store
    }

    pub fn transport(&self) -> &dyn Transport {
        self.transport.as_ref()
    }

    pub fn transport_mut(&mut self) -> &mut dyn Transport {
        self.transport.as_mut()
    }

    pub fn into_parts(self) -> (Box<dyn Transport>, EventStore) {
        (self.transport, self.store)
    }

    pub fn now(&self) -> Timestamp {
        self.transport.now()
    }

    fn append(&mut self, event: Event) -> Result<u64, EngageError> {
        let at = self.transport.now();
        Ok(self.store.append(at, event)?)
    }

    fn conversation(&self, id: &str) -> Result<&Conversation, EngageError> {
        self.store
            .snapshot()
            .conversations
            .get(id)
            .ok_or_else(|| EngageError::UnknownConversation(id.to_string()))
    }

    fn active(&self, id: &str) -> Result<&Conversation, EngageError> {
        let c = self.conversation(id)?;
        if c.is_terminated() {
            return Err(EngageError::SessionTerminated(id.to_string()));
        }
        Ok(c)
    }

    pub fn active_conversations(&self) -> Vec<String> {
        self.store
            .snapshot()
            .conversations
            .values()
            .filter(|c| !c.is_terminated())
            .map(|c| c.conversation_id.clone())
            .collect()
    }

    /// Starts a session and queues the opener, sending it right away under
    /// auto-approve.
    pub fn open_session(&mut self, actor_id: &str) -> Result<String, EngageError> {
        let snap = self.store.snapshot();
        if !snap.actors.contains_key(actor_id) {
            return Err(EngageError::UnknownActor(actor_id.to_string()));
        }
        if snap.active_session(actor_id).is_some() {
            return Err(EngageError::DuplicateSession(actor_id.to_string()));
        }
        let conversation_id = snap.next_conversation_id();
        self.append(Event::SessionOpened {
            conversation_id: conversation_id.clone(),
            actor_id: actor_id.to_string(),
        })?;
        self.queue_opener(&conversation_id)?;
        Ok(conversation_id)
    }

    fn queue_opener(&mut self, conversation_id: &str) -> Result<(), EngageError> {
        let text = self.policy.opener_text.clone();
        self.create_draft(conversation_id, text, PromptTier::Standard)
    }

    fn create_draft(&mut self, conversation_id: &str, text: String, tier: PromptTier) -> Result<(), EngageError> {
        let draft_id = self.store.snapshot().next_draft_id(conversation_id);
        self.append(Event::DraftCreated {
            conversation_id: conversation_id.to_string(),
            draft_id: draft_id.clone(),
            text,
            tier: tier.index(),
        })?;
        if self.policy.auto_approve {
            self.decide(&draft_id, OperatorAction::Approve, AUTO_APPROVE_OPERATOR)?;
        }
        Ok(())
    }

    /// Drafts the next reply. Refusals and model failures are retried with
    /// softer prompts; after `max_retries` consecutive failures the session
    /// ends with an LLM failure.
    pub fn draft_reply(&mut self, conversation_id: &str) -> Result<(), EngageError> {
        loop {
            let c = self.active(conversation_id)?;
            let tier = PromptTier::for_retry(c.retry_counter);
            let request = self.prompts.build(c, tier);
            let failure = match self.model.complete(&request) {
                Ok(reply) if self.detector.is_refusal(&reply) => "model refused".to_string(),
                Ok(reply) => {
                    let text = clean_draft(&reply.content);
                    if text.is_empty() {
                        "model returned an empty reply".to_string()
                    } else {
                        return self.create_draft(conversation_id, text, tier);
                    }
                }
                Err(e) => format!("model unavailable: {e}"),
            };
            tracing::debug!(conversation_id, ?tier, %failure, "drafting attempt failed");
            self.append(Event::DraftRefused {
                conversation_id: conversation_id.to_string(),
                tier: tier.index(),
                reason: failure,
            })?;
            if self.active(conversation_id)?.retry_counter >= self.policy.max_retries {
                return self.finish(conversation_id, OutcomeKind::LlmFailure).map(|_| ());
            }
        }
    }

    fn finish(&mut self, conversation_id: &str, kind: OutcomeKind) -> Result<u64, EngageError> {
        let evidence = if kind == OutcomeKind::PaymentObtained {
            self.store
                .snapshot()
                .disclosures
                .get(conversation_id)
                .cloned()
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        self.append(Event::SessionTerminated {
            conversation_id: conversation_id.to_string(),
            outcome: EngagementOutcome { kind, evidence },
        })
    }

    /// Drafts waiting for an operator, oldest first.
    pub fn pending(&self) -> Vec<PendingDraft> {
        let snap = self.store.snapshot();
        snap.pending_drafts()
            .into_iter()
            .map(|d| {
                let c = &snap.conversations[&d.conversation_id];
                let skip = c.messages.len().saturating_sub(self.policy.context_messages);
                PendingDraft {
                    draft_id: d.draft_id.clone(),
                    conversation_id: d.conversation_id.clone(),
                    actor_id: c.actor.clone(),
                    text: d.text.clone(),
                    context: c.messages[skip..].to_vec(),
                    created_at: d.created_at,
                }
            })
            .collect()
    }

    /// Records an operator decision, then carries it out. The decision is
    /// always logged before any message leaves.
    pub fn decide(&mut self, draft_id: &str, action: OperatorAction, operator: &str) -> Result<DecisionAck, EngageError> {
        let snap = self.store.snapshot();
        let draft = snap
            .drafts
            .get(draft_id)
            .ok_or_else(|| EngageError::UnknownDraft(draft_id.to_string()))?;
        if draft.status != DraftStatus::Pending {
            return Err(EngageError::StaleDraft(draft_id.to_string()));
        }
        let conversation_id = draft.conversation_id.clone();
        let sequence = self.append(Event::OperatorDecision {
            conversation_id: conversation_id.clone(),
            draft_id: Some(draft_id.to_string()),
            action: action.clone(),
            operator: operator.to_string(),
        })?;
        let mut ack = DecisionAck {
            draft_id: draft_id.to_string(),
            conversation_id: conversation_id.clone(),
            sequence,
            sent_message_id: None,
        };
        match action {
            OperatorAction::Approve | OperatorAction::Edit { .. } => {
                ack.sent_message_id = self.send_draft(draft_id)?.map(|r| r.message_id);
            }
            OperatorAction::Reject => {
                if self.store.snapshot().rejections_since_send(&conversation_id) > self.policy.regeneration_cap {
                    self.finish(&conversation_id, OutcomeKind::OperatorTerminated)?;
                } else {
                    self.regenerate(&conversation_id)?;
                }
            }
            OperatorAction::Terminate => {
                self.finish(&conversation_id, OutcomeKind::OperatorTerminated)?;
            }
        }
        Ok(ack)
    }

    fn regenerate(&mut self, conversation_id: &str) -> Result<(), EngageError> {
        if self.active(conversation_id)?.outbound_count() == 0 {
            self.queue_opener(conversation_id)
        } else {
            self.draft_reply(conversation_id)
        }
    }

    /// Ends a session on an operator's request, whatever its state.
    pub fn terminate(&mut self, conversation_id: &str, operator: &str) -> Result<u64, EngageError> {
        self.active(conversation_id)?;
        let pending = self
            .store
            .snapshot()
            .open_draft(conversation_id)
            .filter(|d| d.status == DraftStatus::Pending)
            .map(|d| d.draft_id.clone());
        self.append(Event::OperatorDecision {
            conversation_id: conversation_id.to_string(),
            draft_id: pending,
            action: OperatorAction::Terminate,
            operator: operator.to_string(),
        })?;
        self.finish(conversation_id, OutcomeKind::OperatorTerminated)
    }

    /// Hands an approved draft to the transport. Drafts without an approving
    /// decision in the log are refused. Returns `None` when the other side
    /// has blocked us, which ends the session.
    pub fn send_draft(&mut self, draft_id: &str) -> Result<Option<DeliveryReceipt>, EngageError> {
        let snap = self.store.snapshot();
        let draft = snap
            .drafts
            .get(draft_id)
            .ok_or_else(|| EngageError::UnknownDraft(draft_id.to_string()))?;
        let (Some(text), Some(by), DraftStatus::Approved) = (&draft.approved_text, &draft.decided_by, draft.status) else {
            return Err(EngageError::NotApproved(draft_id.to_string()));
        };
        let conversation_id = draft.conversation_id.clone();
        let approved = ApprovedMessage::new(&conversation_id, draft_id, text, by);
        let c = self.active(&conversation_id)?;
        let target = SendTarget::Actor(c.actor.clone());
        let round_index = c.outbound_count() + 1;
        let had_inbound = c.has_inbound();
        match self.transport.send_message(&target, &approved) {
            Ok(receipt) => {
                let message = ChatMessage {
                    message_id: receipt.message_id.clone(),
                    direction: Direction::Outbound,
                    timestamp: receipt.sent_at,
                    text: approved.text().to_string(),
                    media: Vec::new(),
                    ocr_text: None,
                    round_index,
                    sender: None,
                };
                self.append(Event::MessageSent {
                    conversation_id,
                    draft_id: draft_id.to_string(),
                    message,
                })?;
                Ok(Some(receipt))
            }
            Err(TransportError::Blocked(who)) => {
                tracing::info!(conversation_id, actor = %who, "blocked by the other side");
                let kind = if had_inbound { OutcomeKind::Disengaged } else { OutcomeKind::NoResponse };
                self.finish(&conversation_id, kind)?;
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Records one inbound message with its OCR text and any payment details
    /// found in either; a disclosure ends the session.
    pub fn ingest(&mut self, event: &InboundEvent) -> Result<IngestResult, EngageError> {
        let conversation_id = event.conversation_id.as_str();
        let c = self.active(conversation_id)?;
        if c.messages.iter().any(|m| m.message_id == event.message.message_id) {
            return Ok(IngestResult::Duplicate);
        }
        let mut message = event.message.clone();
        message.ocr_text = None;
        let message_id = message.message_id.clone();
        self.append(Event::MessageReceived { conversation_id: conversation_id.to_string(), message: message.clone() })?;

        let mut ocr_results = Vec::new();
        for media in message.media.iter().filter(|m| m.kind == MediaKind::Image) {
            let Some(payload) = event.payloads.get(&media.media_id) else { continue };
            match self.ocr.extract(media, payload.as_bytes()) {
                Ok(result) => {
                    self.append(Event::OcrAttached {
                        conversation_id: conversation_id.to_string(),
                        message_id: message_id.clone(),
                        result: result.clone(),
                    })?;
                    ocr_results.push(result);
                }
                Err(e) => tracing::warn!(media = %media.media_id, error = %e, "OCR failed"),
            }
        }

        let found = extract_payment(&self.payments, &message.text, &ocr_results, &message_id);
        for disclosure in found {
            let known = self
                .store
                .snapshot()
                .disclosures
                .get(conversation_id)
                .is_some_and(|ds| ds.iter().any(|d| d.method == disclosure.method && d.detail == disclosure.detail));
            if !known {
                self.append(Event::DisclosureFound { conversation_id: conversation_id.to_string(), disclosure })?;
            }
        }
        if self.store.snapshot().disclosures.get(conversation_id).is_some_and(|d| !d.is_empty()) {
            self.finish(conversation_id, OutcomeKind::PaymentObtained)?;
            return Ok(IngestResult::Terminated(OutcomeKind::PaymentObtained));
        }
        if let Some(max) = self.policy.max_rounds {
            if self.active(conversation_id)?.round_counter >= max {
                self.finish(conversation_id, OutcomeKind::OperatorTerminated)?;
                return Ok(IngestResult::Terminated(OutcomeKind::OperatorTerminated));
            }
        }
        Ok(IngestResult::Recorded)
    }

    /// Ingests everything the transport delivered since the last poll.
    /// Replies that reach a session after it ended are dropped.
    pub fn poll(&mut self) -> Result<usize, EngageError> {
        let events = self.transport.poll_events(self.cursor);
        let mut recorded = 0;
        for ev in &events {
            self.cursor = self.cursor.max(ev.received_at);
            match self.ingest(ev) {
                Ok(IngestResult::Duplicate) => {}
                Ok(_) => recorded += 1,
                Err(EngageError::SessionTerminated(_)) | Err(EngageError::UnknownConversation(_)) => {
                    tracing::debug!(conversation_id = %ev.conversation_id, "dropping reply to a closed session");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(recorded)
    }

    /// Terminates silent sessions: never-answered ones as no response,
    /// previously answered ones as disengaged.
    pub fn check_timeouts(&mut self, now: Timestamp) -> Result<Vec<String>, EngageError> {
        let timeout = self.policy.no_response_timeout_secs as i64 * 1000;
        let expired: Vec<(String, bool)> = self
            .store
            .snapshot()
            .conversations
            .values()
            .filter(|c| matches!(c.state, SessionState::ContactSent | SessionState::AwaitingReply))
            .filter(|c| c.messages.last().is_some_and(|m| m.direction == Direction::Outbound))
            .filter(|c| c.last_outbound_at().is_some_and(|t| now - t >= timeout))
            .map(|c| (c.conversation_id.clone(), c.has_inbound()))
            .collect();
        for (id, answered) in &expired {
            let kind = if *answered { OutcomeKind::Disengaged } else { OutcomeKind::NoResponse };
            self.finish(id, kind)?;
        }
        Ok(expired.into_iter().map(|(id, _)| id).collect())
    }

    /// When a conversation next needs the engine's attention.
    fn due_at(&self, c: &Conversation) -> Option<Timestamp> {
        let snap = self.store.snapshot();
        let now = self.transport.now();
        match snap.open_draft(&c.conversation_id) {
            Some(d) if d.status == DraftStatus::Approved => return Some(now),
            Some(_) => return None,
            None => {}
        }
        let last = c.messages.last();
        match c.state {
            SessionState::ContactSent if c.outbound_count() == 0 => Some(now),
            SessionState::Drafting => Some(now),
            SessionState::ContactSent | SessionState::AwaitingReply => match last {
                Some(m) if m.direction == Direction::Inbound => {
                    Some(m.timestamp + self.policy.compose_delay_secs as i64 * 1000)
                }
                Some(m) => Some(m.timestamp + self.policy.no_response_timeout_secs as i64 * 1000),
                None => None,
            },
            _ => None,
        }
    }

    pub fn next_deadline(&self) -> Option<Timestamp> {
        self.store
            .snapshot()
            .conversations
            .values()
            .filter(|c| !c.is_terminated())
            .filter_map(|c| self.due_at(c))
            .min()
    }

    /// Performs every action that is due now: sending approved drafts,
    /// re-queuing openers, drafting replies and expiring silent sessions.
    pub fn step(&mut self) -> Result<(), EngageError> {
        let now = self.transport.now();
        for id in self.active_conversations() {
            let Ok(c) = self.active(&id) else { continue };
            let Some(due) = self.due_at(c) else { continue };
            if due > now {
                continue;
            }
            let approved = self
                .store
                .snapshot()
                .open_draft(&id)
                .filter(|d| d.status == DraftStatus::Approved)
                .map(|d| d.draft_id.clone());
            let c = self.active(&id)?;
            let last_inbound = c.messages.last().is_some_and(|m| m.direction == Direction::Inbound);
            match (approved, c.state) {
                (Some(draft_id), _) => {
                    self.send_draft(&draft_id)?;
                }
                (None, SessionState::ContactSent) if c.outbound_count() == 0 => self.queue_opener(&id)?,
                (None, SessionState::Drafting) => self.draft_reply(&id)?,
                (None, SessionState::ContactSent | SessionState::AwaitingReply) if last_inbound => self.draft_reply(&id)?,
                _ => {}
            }
        }
        self.check_timeouts(now)?;
        Ok(())
    }

    /// Alternates polling, stepping and advancing simulated time until every
    /// session ends, only operators can make progress, or `until` passes.
    pub fn drive(&mut self, until: Option<Timestamp>) -> Result<DriveOutcome, EngageError> {
        loop {
            let before = self.store.sequence();
            self.poll()?;
            self.step()?;
            if self.active_conversations().is_empty() {
                return Ok(DriveOutcome::Finished);
            }
            let now = self.now();
            let next = [self.transport.next_timer_at(), self.next_deadline()]
                .into_iter()
                .flatten()
                .min();
            let Some(next) = next else {
                return Ok(DriveOutcome::AwaitingOperator(self.store.snapshot().pending_drafts().len()));
            };
            if next <= now {
                if self.store.sequence() == before {
                    return Ok(DriveOutcome::AwaitingOperator(self.store.snapshot().pending_drafts().len()));
                }
                continue;
            }
            if let Some(limit) = until {
                if next > limit {
                    if limit > now {
                        self.transport.advance_time(Duration::from_millis((limit - now) as u64))?;
                        self.poll()?;
                        self.step()?;
                    }
                    return Ok(DriveOutcome::Horizon);
                }
            }
            self.transport.advance_time(Duration::from_millis((next - now) as u64))?;
        }
    }
}
