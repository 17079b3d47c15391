//! Core value types shared by every stage of the pipeline.
//!
//! Everything here is plain data plus total functions. Timestamps are epoch
//! milliseconds (UTC); durations are seconds unless a field name says
//! otherwise. Ids are opaque strings minted by the store or the transport.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Epoch milliseconds, UTC.
pub type Timestamp = i64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("channel handle is empty")]
    EmptyHandle,
}

/// A channel handle as typed by a source plus its canonical form.
///
/// Equality, ordering and hashing use only the canonical form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelHandle {
    pub raw: String,
    pub canonical: String,
}

impl ChannelHandle {
    pub fn parse(raw: &str) -> Result<Self, DomainError> {
        canonicalize_handle(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.canonical
    }
}

impl PartialEq for ChannelHandle {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for ChannelHandle {}

impl PartialOrd for ChannelHandle {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ChannelHandle {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical.cmp(&other.canonical)
    }
}

impl std::hash::Hash for ChannelHandle {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.canonical.hash(state);
    }
}

impl fmt::Display for ChannelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.canonical)
    }
}

/// Trim, strip leading `@`s, drop interior whitespace, lowercase.
pub fn canonicalize_handle(raw: &str) -> Result<ChannelHandle, DomainError> {
    let canonical: String = raw
        .trim()
        .trim_start_matches('@')
        .chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    // lowercasing can never reintroduce '@' or whitespace, but a leading '@'
    // can surface after whitespace removal ("@ @x")
    let canonical = canonical.trim_start_matches('@').to_string();
    if canonical.is_empty() {
        return Err(DomainError::EmptyHandle);
    }
    Ok(ChannelHandle {
        raw: raw.to_string(),
        canonical,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiscoverySource {
    DirectoryQuery { keyword: String },
    CrossLink { parent: String },
    SeedConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Decision {
    Relevant,
    Irrelevant,
    Refusal,
    Borderline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Judge {
    Model,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceVerdict {
    pub decision: Decision,
    pub rationale: String,
    pub judged_by: Judge,
}

impl RelevanceVerdict {
    /// Model verdicts of these kinds stay queued until a human supersedes them.
    pub fn needs_escalation(&self) -> bool {
        self.judged_by == Judge::Model
            && matches!(self.decision, Decision::Refusal | Decision::Borderline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub handle: ChannelHandle,
    pub title: String,
    pub discovery_source: DiscoverySource,
    pub depth: u32,
    pub pinned_posts: Vec<ChatMessage>,
    pub recent_messages: Vec<ChatMessage>,
    pub verdict: Option<RelevanceVerdict>,
}

impl ChannelRecord {
    pub fn is_relevant(&self) -> bool {
        matches!(&self.verdict, Some(v) if v.decision == Decision::Relevant)
    }

    /// Violations of the record invariants, given the harvest limit in force.
    pub fn violations(&self, harvest_limit: usize) -> Vec<String> {
        let mut out = Vec::new();
        let root = matches!(
            self.discovery_source,
            DiscoverySource::DirectoryQuery { .. } | DiscoverySource::SeedConfig
        );
        if root != (self.depth == 0) {
            out.push("depth-source mismatch".to_string());
        }
        if self.recent_messages.len() > harvest_limit {
            out.push("harvest limit exceeded".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    Individual,
    Platform,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorProfile {
    pub actor_id: String,
    pub source_channels: BTreeSet<String>,
    pub classification: Classification,
    /// Seconds from our first outbound to their first reply, one per conversation.
    pub first_response_latencies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MediaKind {
    Image,
    Other,
}

/// Media are never stored as bytes; only an id, a content digest and labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub media_id: String,
    pub kind: MediaKind,
    #[serde(default)]
    pub person_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub message_id: String,
    pub direction: Direction,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    pub round_index: u32,
    /// Posting account for channel history; absent for channel-authored posts
    /// and for direct conversations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<String>,
}

impl ChatMessage {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.text.is_empty() && self.media.is_empty() {
            out.push("empty message without media".to_string());
        }
        if self.ocr_text.is_some() && self.media.is_empty() {
            out.push("ocr text without media".to_string());
        }
        out
    }

    /// Text plus any OCR overlay, as seen by extractors.
    pub fn full_text(&self) -> String {
        match &self.ocr_text {
            Some(ocr) if !ocr.is_empty() => format!("{}\n{}", self.text, ocr),
            _ => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Idle,
    ContactSent,
    AwaitingReply,
    Drafting,
    PendingApproval,
    Terminated,
}

impl SessionState {
    /// The legal transition relation. Any non-terminal state may terminate.
    pub fn can_transition(self, to: SessionState) -> bool {
        use SessionState::*;
        match (self, to) {
            (Terminated, _) => false,
            (_, Terminated) => true,
            (Idle, ContactSent)
            | (ContactSent, AwaitingReply)
            | (AwaitingReply, Drafting)
            | (Drafting, PendingApproval)
            | (PendingApproval, AwaitingReply)
            | (PendingApproval, Drafting) => true,
            (a, b) => a == b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    PaymentObtained,
    NoResponse,
    Disengaged,
    LlmFailure,
    OperatorTerminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementOutcome {
    pub kind: OutcomeKind,
    pub evidence: Vec<PaymentDisclosure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PaymentMethod {
    Alipay,
    AlipayImage,
    WeChat,
    #[serde(rename = "USDT")]
    Usdt,
    QQImage,
    Bank,
    PaymentSolution,
}

impl PaymentMethod {
    pub const ALL: [PaymentMethod; 7] = [
        PaymentMethod::Alipay,
        PaymentMethod::AlipayImage,
        PaymentMethod::WeChat,
        PaymentMethod::Usdt,
        PaymentMethod::QQImage,
        PaymentMethod::Bank,
        PaymentMethod::PaymentSolution,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PaymentMethod::Alipay => "Alipay",
            PaymentMethod::AlipayImage => "Alipay_P",
            PaymentMethod::WeChat => "WeChat",
            PaymentMethod::Usdt => "USDT",
            PaymentMethod::QQImage => "QQ_P",
            PaymentMethod::Bank => "Bank",
            PaymentMethod::PaymentSolution => "Payment_Solution",
        }
    }

    pub fn image_only(self) -> bool {
        matches!(self, PaymentMethod::AlipayImage | PaymentMethod::QQImage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Carrier {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub message_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentDisclosure {
    pub method: PaymentMethod,
    pub carrier: Carrier,
    pub evidence_ref: EvidenceRef,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub duration_minutes: u32,
    pub price_cny: f64,
    pub evidence_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub actor: String,
    pub state: SessionState,
    pub messages: Vec<ChatMessage>,
    pub round_counter: u32,
    pub retry_counter: u32,
    /// `None` while pending.
    pub outcome: Option<EngagementOutcome>,
}

impl Conversation {
    pub fn new(conversation_id: impl Into<String>, actor: impl Into<String>) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            actor: actor.into(),
            state: SessionState::Idle,
            messages: Vec::new(),
            round_counter: 0,
            retry_counter: 0,
            outcome: None,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.state == SessionState::Terminated
    }

    pub fn outbound_count(&self) -> u32 {
        self.messages
            .iter()
            .filter(|m| m.direction == Direction::Outbound)
            .count() as u32
    }

    pub fn has_inbound(&self) -> bool {
        self.messages.iter().any(|m| m.direction == Direction::Inbound)
    }

    pub fn last_outbound_at(&self) -> Option<Timestamp> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.direction == Direction::Outbound)
            .map(|m| m.timestamp)
    }

    /// Seconds between the first outbound and the first inbound after it.
    pub fn first_response_latency_secs(&self) -> Option<f64> {
        let first_out = self
            .messages
            .iter()
            .position(|m| m.direction == Direction::Outbound)?;
        let sent = self.messages[first_out].timestamp;
        self.messages[first_out..]
            .iter()
            .find(|m| m.direction == Direction::Inbound)
            .map(|m| (m.timestamp - sent) as f64 / 1000.0)
    }

    pub fn media(&self) -> impl Iterator<Item = &MediaRef> {
        self.messages.iter().flat_map(|m| m.media.iter())
    }
}

/// Completed rounds in a message list. A round completes at the first inbound
/// message that follows an outbound one; further inbound messages before the
/// next outbound belong to the same round.
pub fn count_rounds(messages: &[ChatMessage]) -> u32 {
    let mut rounds = 0;
    let mut awaiting = false;
    for m in messages {
        match m.direction {
            Direction::Outbound => awaiting = true,
            Direction::Inbound if awaiting => {
                rounds += 1;
                awaiting = false;
            }
            Direction::Inbound => {}
        }
    }
    rounds
}

/// Invariant check over a conversation. Empty iff every invariant holds.
pub fn validate_conversation(c: &Conversation) -> Vec<String> {
    let mut out = Vec::new();

    let terminated = c.state == SessionState::Terminated;
    if terminated != c.outcome.is_some() {
        out.push("outcome-state mismatch".to_string());
    }
    if c.messages.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
        out.push("ordering violated".to_string());
    }
    if count_rounds(&c.messages) != c.round_counter {
        out.push("round counter mismatch".to_string());
    }
    if c.retry_counter > 3 {
        out.push("retry counter out of range".to_string());
    }
    let mut media_ids = HashSet::new();
    for m in &c.messages {
        out.extend(m.violations());
        for media in &m.media {
            if !media_ids.insert(media.media_id.as_str()) {
                out.push("duplicate media id".to_string());
            }
        }
    }
    if let Some(outcome) = &c.outcome {
        let paid = outcome.kind == OutcomeKind::PaymentObtained;
        if paid == outcome.evidence.is_empty() {
            out.push("outcome evidence mismatch".to_string());
        }
        if outcome
            .evidence
            .iter()
            .any(|d| d.method.image_only() && d.carrier != Carrier::Image)
        {
            out.push("method-carrier mismatch".to_string());
        }
    }
    out.dedup();
    out
}

/// Counts keyed by media kind, used in channel digests.
pub fn media_summary<'a>(messages: impl IntoIterator<Item = &'a ChatMessage>) -> BTreeMap<MediaKind, usize> {
    let mut out = BTreeMap::new();
    for m in messages {
        for media in &m.media {
            *out.entry(media.kind).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn msg(id: &str, direction: Direction, ts: Timestamp, text: &str, round: u32) -> ChatMessage {
        ChatMessage {
            message_id: id.to_string(),
            direction,
            timestamp: ts,
            text: text.to_string(),
            media: Vec::new(),
            ocr_text: None,
            round_index: round,
            sender: None,
        }
    }

    pub fn disclosure(method: PaymentMethod, carrier: Carrier) -> PaymentDisclosure {
        PaymentDisclosure {
            method,
            carrier,
            evidence_ref: EvidenceRef {
                message_id: "m".into(),
                media_id: None,
            },
            detail: "d".into(),
        }
    }

    /// Three completed rounds ending in a text USDT disclosure.
    pub fn three_round_success() -> Conversation {
        use Direction::*;
        let mut c = Conversation::new("conv-0001", "acct-001");
        c.messages = vec![
            msg("o1", Outbound, 1_000, "Hi, how much do your services cost?", 1),
            msg("i1", Inbound, 61_000, "30分钟 300元", 1),
            msg("o2", Outbound, 90_000, "ok nice", 2),
            msg("i2", Inbound, 150_000, "sure", 2),
            msg("i3", Inbound, 151_000, "want more?", 2),
            msg("o3", Outbound, 200_000, "how do I pay", 3),
            msg("i4", Inbound, 260_000, "USDT TRC20", 3),
        ];
        c.round_counter = 3;
        c.state = SessionState::Terminated;
        c.outcome = Some(EngagementOutcome {
            kind: OutcomeKind::PaymentObtained,
            evidence: vec![disclosure(PaymentMethod::Usdt, Carrier::Text)],
        });
        c
    }
}
