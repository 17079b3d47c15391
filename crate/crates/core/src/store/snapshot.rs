use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Event, EventRecord};
use crate::domain::{
    count_rounds, ActorProfile, ChannelRecord, Conversation, Direction, Judge, MediaKind, OutcomeKind,
    PaymentDisclosure, SessionState, Timestamp,
};
use crate::engagement::OperatorAction;
use crate::filter::EscalationItem;
use crate::vision::OcrResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    Pending,
    /// Released by a decision but not yet handed to the transport.
    Approved,
    Sent,
    Rejected,
    /// The session ended while the draft was open.
    Void,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftRecord {
    pub draft_id: String,
    pub conversation_id: String,
    pub text: String,
    pub tier: u32,
    pub created_at: Timestamp,
    pub created_seq: u64,
    pub status: DraftStatus,
    /// Text released by the operator; differs from `text` after an edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approved_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<String>,
}

/// Everything derivable from the log at one sequence number.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sequence: u64,
    pub last_at: Timestamp,
    pub channels: BTreeMap<String, ChannelRecord>,
    pub escalations: BTreeMap<String, EscalationItem>,
    pub actors: BTreeMap<String, ActorProfile>,
    pub conversations: BTreeMap<String, Conversation>,
    pub drafts: BTreeMap<String, DraftRecord>,
    pub disclosures: BTreeMap<String, Vec<PaymentDisclosure>>,
    pub ocr: BTreeMap<String, OcrResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Channels,
    Escalations,
    Actors,
    Conversations,
    Drafts,
    Disclosures,
}

/// Field-equality filter over the JSON form of a record. Paths are dotted,
/// e.g. `verdict.decision`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub conditions: Vec<(String, Value)>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn eq(mut self, path: &str, value: impl Into<Value>) -> Self {
        self.conditions.push((path.to_string(), value.into()));
        self
    }

    fn matches(&self, record: &Value) -> bool {
        self.conditions.iter().all(|(path, want)| {
            path.split('.')
                .try_fold(record, |v, key| v.get(key))
                .is_some_and(|got| got == want)
        })
    }
}

fn walk_to(c: &mut Conversation, to: SessionState) {
    if c.state == SessionState::AwaitingReply && to == SessionState::PendingApproval {
        c.state = SessionState::Drafting;
    }
    debug_assert!(c.state.can_transition(to), "{:?} -> {:?}", c.state, to);
    c.state = to;
}

impl Snapshot {
    pub fn next_conversation_id(&self) -> String {
        format!("conv-{:04}", self.conversations.len() + 1)
    }

    pub fn next_escalation_id(&self) -> String {
        format!("esc-{:04}", self.escalations.len() + 1)
    }

    pub fn next_draft_id(&self, conversation_id: &str) -> String {
        let n = self.drafts.values().filter(|d| d.conversation_id == conversation_id).count();
        format!("{conversation_id}-d{}", n + 1)
    }

    pub fn active_session(&self, actor_id: &str) -> Option<&Conversation> {
        self.conversations
            .values()
            .find(|c| c.actor == actor_id && !c.is_terminated())
    }

    /// The draft of a conversation that is pending or approved but unsent.
    pub fn open_draft(&self, conversation_id: &str) -> Option<&DraftRecord> {
        self.drafts.values().find(|d| {
            d.conversation_id == conversation_id && matches!(d.status, DraftStatus::Pending | DraftStatus::Approved)
        })
    }

    /// Pending drafts, oldest first.
    pub fn pending_drafts(&self) -> Vec<&DraftRecord> {
        let mut out: Vec<_> = self.drafts.values().filter(|d| d.status == DraftStatus::Pending).collect();
        out.sort_by_key(|d| d.created_seq);
        out
    }

    /// Consecutive rejected drafts since the last message we sent.
    pub fn rejections_since_send(&self, conversation_id: &str) -> u32 {
        let mut drafts: Vec<_> = self
            .drafts
            .values()
            .filter(|d| d.conversation_id == conversation_id)
            .collect();
        drafts.sort_by_key(|d| d.created_seq);
        drafts
            .iter()
            .rev()
            .take_while(|d| d.status == DraftStatus::Rejected)
            .count() as u32
    }

    pub fn relevant_channels(&self) -> impl Iterator<Item = &ChannelRecord> {
        self.channels.values().filter(|c| c.is_relevant())
    }

    pub fn terminated_conversations(&self) -> impl Iterator<Item = &Conversation> {
        self.conversations.values().filter(|c| c.is_terminated())
    }

    pub fn query(&self, kind: RecordKind, filter: &Filter) -> Vec<Value> {
        fn collect<'a, T: Serialize + 'a>(items: impl Iterator<Item = &'a T>, f: &Filter) -> Vec<Value> {
            items
                .map(|i| serde_json::to_value(i).expect("records serialize"))
                .filter(|v| f.matches(v))
                .collect()
        }
        match kind {
            RecordKind::Channels => collect(self.channels.values(), filter),
            RecordKind::Escalations => collect(self.escalations.values(), filter),
            RecordKind::Actors => collect(self.actors.values(), filter),
            RecordKind::Conversations => collect(self.conversations.values(), filter),
            RecordKind::Drafts => collect(self.drafts.values(), filter),
            RecordKind::Disclosures => self
                .disclosures
                .iter()
                .flat_map(|(conv, ds)| {
                    ds.iter().map(move |d| {
                        let mut v = serde_json::to_value(d).expect("records serialize");
                        v["conversation_id"] = Value::String(conv.clone());
                        v
                    })
                })
                .filter(|v| filter.matches(v))
                .collect(),
        }
    }

    fn live_conversation(&self, id: &str) -> Result<&Conversation, String> {
        let c = self
            .conversations
            .get(id)
            .ok_or_else(|| format!("unknown conversation {id}"))?;
        if c.is_terminated() {
            return Err(format!("conversation {id} is terminated"));
        }
        Ok(c)
    }

    /// Checks that `event` may follow the current state. Appending and
    /// replaying run the same checks.
    pub fn validate(&self, event: &Event) -> Result<(), String> {
        match event {
            Event::ChannelDiscovered { record } => {
                if self.channels.contains_key(&record.handle.canonical) {
                    return Err(format!("channel @{} already recorded", record.handle.canonical));
                }
                if let Some(v) = record.violations(usize::MAX).first() {
                    return Err(v.clone());
                }
                if record.recent_messages.iter().chain(&record.pinned_posts).any(|m| !m.violations().is_empty()) {
                    return Err("malformed channel message".into());
                }
            }
            Event::ChannelJudged { handle, .. } => {
                if !self.channels.contains_key(handle) {
                    return Err(format!("unknown channel @{handle}"));
                }
            }
            Event::EscalationQueued { item } => {
                if self.escalations.contains_key(&item.escalation_id) {
                    return Err(format!("escalation {} exists", item.escalation_id));
                }
                if !self.channels.contains_key(&item.handle) {
                    return Err(format!("unknown channel @{}", item.handle));
                }
                if item.resolved.is_some() {
                    return Err("escalations are queued unresolved".into());
                }
                if !item.reopened && !item.model_verdict.needs_escalation() {
                    return Err("only refusal or borderline model verdicts are escalated".into());
                }
            }
            Event::EscalationResolved { escalation_id, verdict } => {
                let item = self
                    .escalations
                    .get(escalation_id)
                    .ok_or_else(|| format!("unknown escalation {escalation_id}"))?;
                if item.resolved.is_some() {
                    return Err(format!("escalation {escalation_id} already resolved"));
                }
                if verdict.judged_by != Judge::Human || verdict.needs_escalation() {
                    return Err("resolutions must be human relevant/irrelevant verdicts".into());
                }
            }
            Event::ActorIdentified { profile } => {
                if self.actors.contains_key(&profile.actor_id) {
                    return Err(format!("actor {} already identified", profile.actor_id));
                }
                if let Some(h) = profile.source_channels.iter().find(|h| !self.channels.contains_key(*h)) {
                    return Err(format!("actor source channel @{h} unknown"));
                }
            }
            Event::SessionOpened { conversation_id, actor_id } => {
                if self.conversations.contains_key(conversation_id) {
                    return Err(format!("conversation {conversation_id} exists"));
                }
                if !self.actors.contains_key(actor_id) {
                    return Err(format!("unknown actor {actor_id}"));
                }
                if self.active_session(actor_id).is_some() {
                    return Err(format!("actor {actor_id} already has an active session"));
                }
            }
            Event::DraftCreated { conversation_id, draft_id, text, .. } => {
                let c = self.live_conversation(conversation_id)?;
                if self.drafts.contains_key(draft_id) {
                    return Err(format!("draft {draft_id} exists"));
                }
                if text.trim().is_empty() {
                    return Err("empty draft".into());
                }
                if self.open_draft(conversation_id).is_some() {
                    return Err(format!("{conversation_id} already has an open draft"));
                }
                let ok = match c.state {
                    SessionState::ContactSent => c.outbound_count() == 0,
                    SessionState::AwaitingReply | SessionState::Drafting => true,
                    _ => false,
                };
                if !ok {
                    return Err(format!("cannot draft in state {:?}", c.state));
                }
            }
            Event::DraftRefused { conversation_id, .. } => {
                let c = self.live_conversation(conversation_id)?;
                if !matches!(c.state, SessionState::AwaitingReply | SessionState::Drafting) {
                    return Err(format!("cannot draft in state {:?}", c.state));
                }
                if c.retry_counter >= 3 {
                    return Err("retry counter exhausted".into());
                }
            }
            Event::OperatorDecision { conversation_id, draft_id, action, .. } => {
                self.live_conversation(conversation_id)?;
                match draft_id {
                    Some(id) => {
                        let d = self.drafts.get(id).ok_or_else(|| format!("unknown draft {id}"))?;
                        if &d.conversation_id != conversation_id {
                            return Err(format!("draft {id} belongs to {}", d.conversation_id));
                        }
                        if d.status != DraftStatus::Pending {
                            return Err(format!("draft {id} is not pending"));
                        }
                    }
                    None if *action != OperatorAction::Terminate => {
                        return Err("only termination may be decided without a draft".into());
                    }
                    None => {}
                }
                if let OperatorAction::Edit { text } = action {
                    if text.trim().is_empty() {
                        return Err("edited text is empty".into());
                    }
                }
            }
            Event::MessageSent { conversation_id, draft_id, message } => {
                let c = self.live_conversation(conversation_id)?;
                let d = self.drafts.get(draft_id).ok_or_else(|| format!("unknown draft {draft_id}"))?;
                if &d.conversation_id != conversation_id || d.status != DraftStatus::Approved {
                    return Err(format!("draft {draft_id} has no approving decision"));
                }
                if Some(&message.text) != d.approved_text.as_ref() {
                    return Err("sent text differs from the approved text".into());
                }
                if message.direction != Direction::Outbound {
                    return Err("sent message must be outbound".into());
                }
                if message.round_index != c.outbound_count() + 1 {
                    return Err("outbound round index out of step".into());
                }
                check_append(c, message)?;
            }
            Event::MessageReceived { conversation_id, message } => {
                let c = self.live_conversation(conversation_id)?;
                if message.direction != Direction::Inbound {
                    return Err("received message must be inbound".into());
                }
                if c.outbound_count() == 0 {
                    return Err("inbound before any outbound".into());
                }
                check_append(c, message)?;
            }
            Event::OcrAttached { conversation_id, message_id, result } => {
                let c = self.live_conversation(conversation_id)?;
                let m = c
                    .messages
                    .iter()
                    .find(|m| &m.message_id == message_id)
                    .ok_or_else(|| format!("unknown message {message_id}"))?;
                let media = m
                    .media
                    .iter()
                    .find(|x| x.media_id == result.media_id)
                    .ok_or_else(|| format!("unknown media {}", result.media_id))?;
                if media.kind != MediaKind::Image {
                    return Err("OCR on non-image media".into());
                }
                if self.ocr.contains_key(&result.media_id) {
                    return Err(format!("media {} already has OCR text", result.media_id));
                }
            }
            Event::DisclosureFound { conversation_id, disclosure } => {
                let c = self.live_conversation(conversation_id)?;
                let ev = &disclosure.evidence_ref;
                let m = c
                    .messages
                    .iter()
                    .find(|m| m.message_id == ev.message_id)
                    .ok_or_else(|| format!("evidence message {} unknown", ev.message_id))?;
                if let Some(media_id) = &ev.media_id {
                    if !m.media.iter().any(|x| &x.media_id == media_id) {
                        return Err(format!("evidence media {media_id} unknown"));
                    }
                }
                if disclosure.method.image_only() && disclosure.carrier != crate::domain::Carrier::Image {
                    return Err("method-carrier mismatch".into());
                }
            }
            Event::SessionTerminated { conversation_id, outcome } => {
                self.live_conversation(conversation_id)?;
                let found = self.disclosures.get(conversation_id).cloned().unwrap_or_default();
                let paid = outcome.kind == OutcomeKind::PaymentObtained;
                if paid && (outcome.evidence.is_empty() || outcome.evidence != found) {
                    return Err("payment outcome must carry the recorded disclosures".into());
                }
                if !paid && !outcome.evidence.is_empty() {
                    return Err("only payment outcomes carry evidence".into());
                }
            }
        }
        Ok(())
    }

    /// Applies an event that passed [`Snapshot::validate`].
    pub fn apply(&mut self, record: &EventRecord) {
        self.sequence = record.sequence;
        self.last_at = record.at;
        match &record.event {
            Event::ChannelDiscovered { record } => {
                self.channels.insert(record.handle.canonical.clone(), record.clone());
            }
            Event::ChannelJudged { handle, verdict } => {
                if let Some(c) = self.channels.get_mut(handle) {
                    c.verdict = Some(verdict.clone());
                }
            }
            Event::EscalationQueued { item } => {
                self.escalations.insert(item.escalation_id.clone(), item.clone());
            }
            Event::EscalationResolved { escalation_id, verdict } => {
                if let Some(item) = self.escalations.get_mut(escalation_id) {
                    item.resolved = Some(verdict.clone());
                    if let Some(c) = self.channels.get_mut(&item.handle) {
                        c.verdict = Some(verdict.clone());
                    }
                }
            }
            Event::ActorIdentified { profile } => {
                self.actors.insert(profile.actor_id.clone(), profile.clone());
            }
            Event::SessionOpened { conversation_id, actor_id } => {
                let mut c = Conversation::new(conversation_id.clone(), actor_id.clone());
                walk_to(&mut c, SessionState::ContactSent);
                self.conversations.insert(conversation_id.clone(), c);
            }
            Event::DraftCreated { conversation_id, draft_id, text, tier } => {
                self.drafts.insert(
                    draft_id.clone(),
                    DraftRecord {
                        draft_id: draft_id.clone(),
                        conversation_id: conversation_id.clone(),
                        text: text.clone(),
                        tier: *tier,
                        created_at: record.at,
                        created_seq: record.sequence,
                        status: DraftStatus::Pending,
                        approved_text: None,
                        decided_by: None,
                    },
                );
                if let Some(c) = self.conversations.get_mut(conversation_id) {
                    c.retry_counter = 0;
                    if c.state != SessionState::ContactSent {
                        walk_to(c, SessionState::PendingApproval);
                    }
                }
            }
            Event::DraftRefused { conversation_id, .. } => {
                if let Some(c) = self.conversations.get_mut(conversation_id) {
                    c.retry_counter += 1;
                    walk_to(c, SessionState::Drafting);
                }
            }
            Event::OperatorDecision { conversation_id, draft_id, action, operator } => {
                if let Some(d) = draft_id.as_ref().and_then(|id| self.drafts.get_mut(id)) {
                    d.decided_by = Some(operator.clone());
                    match action {
                        OperatorAction::Approve => {
                            d.status = DraftStatus::Approved;
                            d.approved_text = Some(d.text.clone());
                        }
                        OperatorAction::Edit { text } => {
                            d.status = DraftStatus::Approved;
                            d.approved_text = Some(text.clone());
                        }
                        OperatorAction::Reject => d.status = DraftStatus::Rejected,
                        OperatorAction::Terminate => d.status = DraftStatus::Void,
                    }
                }
                if *action == OperatorAction::Reject {
                    if let Some(c) = self.conversations.get_mut(conversation_id) {
                        if c.state == SessionState::PendingApproval {
                            walk_to(c, SessionState::Drafting);
                        }
                    }
                }
            }
            Event::MessageSent { conversation_id, draft_id, message } => {
                if let Some(d) = self.drafts.get_mut(draft_id) {
                    d.status = DraftStatus::Sent;
                }
                if let Some(c) = self.conversations.get_mut(conversation_id) {
                    c.messages.push(message.clone());
                    c.round_counter = count_rounds(&c.messages);
                    if c.state == SessionState::PendingApproval {
                        walk_to(c, SessionState::AwaitingReply);
                    }
                }
            }
            Event::MessageReceived { conversation_id, message } => {
                if let Some(c) = self.conversations.get_mut(conversation_id) {
                    c.messages.push(message.clone());
                    c.round_counter = count_rounds(&c.messages);
                    if c.state == SessionState::ContactSent {
                        walk_to(c, SessionState::AwaitingReply);
                    }
                }
            }
            Event::OcrAttached { conversation_id, message_id, result } => {
                if let Some(m) = self
                    .conversations
                    .get_mut(conversation_id)
                    .and_then(|c| c.messages.iter_mut().find(|m| &m.message_id == message_id))
                {
                    m.ocr_text = Some(match m.ocr_text.take() {
                        Some(prev) if !prev.is_empty() => format!("{prev}\n{}", result.text),
                        _ => result.text.clone(),
                    });
                }
                self.ocr.insert(result.media_id.clone(), result.clone());
            }
            Event::DisclosureFound { conversation_id, disclosure } => {
                self.disclosures
                    .entry(conversation_id.clone())
                    .or_default()
                    .push(disclosure.clone());
            }
            Event::SessionTerminated { conversation_id, outcome } => {
                for d in self.drafts.values_mut() {
                    if &d.conversation_id == conversation_id
                        && matches!(d.status, DraftStatus::Pending | DraftStatus::Approved)
                    {
                        d.status = DraftStatus::Void;
                    }
                }
                if let Some(c) = self.conversations.get_mut(conversation_id) {
                    walk_to(c, SessionState::Terminated);
                    c.outcome = Some(outcome.clone());
                }
            }
        }
    }
}

fn check_append(c: &Conversation, message: &crate::domain::ChatMessage) -> Result<(), String> {
    if let Some(v) = message.violations().first() {
        return Err(v.clone());
    }
    if let Some(last) = c.messages.last() {
        if message.timestamp <= last.timestamp {
            return Err("ordering violated".into());
        }
    }
    if c.messages.iter().any(|m| m.message_id == message.message_id) {
        return Err(format!("duplicate message {}", message.message_id));
    }
    let seen: std::collections::BTreeSet<_> = c.media().map(|m| m.media_id.as_str()).collect();
    if message.media.iter().any(|m| seen.contains(m.media_id.as_str())) {
        return Err("duplicate media id".into());
    }
    Ok(())
}
