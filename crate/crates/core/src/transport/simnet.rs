//! Deterministic discrete-event messaging network.
//!
//! Time only moves through [`Transport::advance_time`]. Every persona owns a
//! ChaCha stream seeded from the scenario seed and its actor id, so latency
//! draws do not depend on the order in which personas are contacted.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{ChannelSpec, LatencySpec, MediaSpec, PersonaSpec, PostSpec, Scenario, ScenarioError};
use super::{
    normalize_keyword, DeliveryReceipt, DirectoryQuery, History, InboundEvent, JoinConfirmation, SendTarget, Transport,
    TransportError, TransportKind,
};
use crate::domain::{canonicalize_handle, ChannelHandle, ChatMessage, Direction, MediaKind, MediaRef, Timestamp};
use crate::engagement::ApprovedMessage;

/// An outbound message as the network saw it. Enough to rebuild the
/// network state after a restart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentRecord {
    pub conversation_id: String,
    pub actor_id: String,
    pub message_id: String,
    pub text: String,
    pub sent_at: Timestamp,
}

struct ChannelState {
    spec: ChannelSpec,
    posts: Vec<ChatMessage>,
    pins: Vec<ChatMessage>,
}

struct PersonaState {
    spec: PersonaSpec,
    rng: ChaCha8Rng,
    conversation_id: Option<String>,
    outbound: u32,
    last_out: Timestamp,
    /// Timestamp of the latest scheduled reply, delivered or not.
    last_in: Timestamp,
    last_delivered: Timestamp,
}

struct Pending {
    conversation_id: String,
    actor_id: String,
    message: ChatMessage,
    payloads: BTreeMap<String, String>,
}

pub struct Simnet {
    scenario: Scenario,
    now: Timestamp,
    channels: BTreeMap<String, ChannelState>,
    joined: BTreeSet<String>,
    personas: BTreeMap<String, PersonaState>,
    timers: BinaryHeap<Reverse<(Timestamp, String, u64)>>,
    pending: BTreeMap<u64, Pending>,
    next_timer_seq: u64,
    delivered: Vec<InboundEvent>,
    sent: Vec<SentRecord>,
}

pub(crate) fn digest_hex(payload: &str) -> String {
    let d = Sha256::digest(payload.as_bytes());
    hex::encode(&d[..8])
}

fn persona_seed(seed: u64, actor_id: &str) -> u64 {
    let d = Sha256::digest(actor_id.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    seed ^ u64::from_le_bytes(b)
}

fn secs_to_ms(secs: f64) -> i64 {
    (secs * 1000.0).round() as i64
}

fn build_media(message_id: &str, specs: &[MediaSpec]) -> (Vec<MediaRef>, BTreeMap<String, String>) {
    let mut media = Vec::new();
    let mut payloads = BTreeMap::new();
    for (n, m) in specs.iter().enumerate() {
        let media_id = format!("{message_id}-img{}", n + 1);
        if m.kind == MediaKind::Image {
            payloads.insert(media_id.clone(), m.payload.clone());
        }
        media.push(MediaRef {
            media_id,
            kind: m.kind,
            person_labels: m.person_labels.clone(),
            digest: Some(digest_hex(&m.payload)),
        });
    }
    (media, payloads)
}

fn post_message(id: String, post: &PostSpec, timestamp: Timestamp) -> ChatMessage {
    let (media, _) = build_media(&id, &post.media);
    ChatMessage {
        message_id: id,
        direction: Direction::Inbound,
        timestamp,
        text: post.text.clone(),
        media,
        ocr_text: None,
        round_index: 0,
        sender: post.sender.clone(),
    }
}

impl Simnet {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let start = scenario.start_ms;
        let mut channels = BTreeMap::new();
        for spec in &scenario.channels {
            let handle = canonicalize_handle(&spec.handle).expect("validated");
            let n = spec.posts.len() as i64;
            let posts = spec
                .posts
                .iter()
                .enumerate()
                .map(|(i, p)| post_message(format!("{}-p{}", handle.canonical, i + 1), p, start - (n - i as i64) * 60_000))
                .collect();
            let pins = spec
                .pins
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let ts = start - (n + 1) * 60_000 - (spec.pins.len() - i) as i64 * 3_600_000;
                    post_message(format!("{}-pin{}", handle.canonical, i + 1), p, ts)
                })
                .collect();
            channels.insert(handle.canonical, ChannelState { spec: spec.clone(), posts, pins });
        }
        let personas = scenario
            .personas
            .iter()
            .map(|p| {
                let state = PersonaState {
                    spec: p.clone(),
                    rng: ChaCha8Rng::seed_from_u64(persona_seed(scenario.seed, &p.actor_id)),
                    conversation_id: None,
                    outbound: 0,
                    last_out: i64::MIN,
                    last_in: i64::MIN,
                    last_delivered: i64::MIN,
                };
                (p.actor_id.clone(), state)
            })
            .collect();
        Ok(Self {
            now: start,
            scenario,
            channels,
            joined: BTreeSet::new(),
            personas,
            timers: BinaryHeap::new(),
            pending: BTreeMap::new(),
            next_timer_seq: 0,
            delivered: Vec::new(),
            sent: Vec::new(),
        })
    }

    /// Rebuilds a network from the outbound traffic of an earlier run, then
    /// moves the clock to `now`. Replies are regenerated, so callers must
    /// skip inbound messages they have already recorded.
    pub fn restore(scenario: Scenario, sent: &[SentRecord], now: Timestamp) -> Result<Self, TransportError> {
        let mut net = Simnet::new(scenario).map_err(|e| TransportError::BackendUnavailable(e.to_string()))?;
        for rec in sent {
            if rec.sent_at > net.now {
                net.advance_to(rec.sent_at);
            }
            let receipt = net.deliver_outbound(&rec.actor_id, &rec.conversation_id, &rec.text)?;
            if receipt.message_id != rec.message_id || receipt.sent_at != rec.sent_at {
                return Err(TransportError::BackendUnavailable(format!(
                    "restored send {} diverged from the recorded run",
                    rec.message_id
                )));
            }
        }
        if now > net.now {
            net.advance_to(now);
        }
        Ok(net)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn sent(&self) -> &[SentRecord] {
        &self.sent
    }

    pub fn pending_timers(&self) -> usize {
        self.timers.len()
    }

    fn channel(&self, handle: &ChannelHandle) -> Result<&ChannelState, TransportError> {
        self.channels
            .get(&handle.canonical)
            .ok_or_else(|| TransportError::UnknownChannel(handle.canonical.clone()))
    }

    fn sample_latency_ms(state: &mut PersonaState) -> i64 {
        let ms = match state.spec.latency() {
            LatencySpec::Fixed { secs } => secs_to_ms(secs),
            LatencySpec::Uniform { min_secs, max_secs } => {
                if max_secs > min_secs {
                    secs_to_ms(state.rng.gen_range(min_secs..=max_secs))
                } else {
                    secs_to_ms(min_secs)
                }
            }
        };
        ms.max(1)
    }

    fn deliver_outbound(
        &mut self,
        actor_id: &str,
        conversation_id: &str,
        text: &str,
    ) -> Result<DeliveryReceipt, TransportError> {
        let gap_ms = secs_to_ms(self.scenario.burst_gap_secs).max(1);
        let now = self.now;
        let state = self
            .personas
            .get_mut(actor_id)
            .ok_or_else(|| TransportError::UnknownTarget(actor_id.to_string()))?;
        if state.conversation_id.as_deref() != Some(conversation_id) {
            state.conversation_id = Some(conversation_id.to_string());
            state.outbound = 0;
        }
        if let Some(limit) = state.spec.blocks_after {
            if state.outbound >= limit {
                return Err(TransportError::Blocked(actor_id.to_string()));
            }
        }
        state.outbound += 1;
        let k = state.outbound;
        let sent_at = now
            .max(state.last_out.saturating_add(1))
            .max(state.last_delivered.saturating_add(1));
        state.last_out = sent_at;
        let message_id = format!("out-{conversation_id}-{k}");

        let replies = state.spec.disengage_after().is_none_or(|d| k <= d);
        let turn = if replies {
            state.spec.script.get(k as usize - 1).cloned().unwrap_or_default()
        } else {
            Vec::new()
        };
        if !turn.is_empty() {
            let base = sent_at + Self::sample_latency_ms(state);
            for (j, reply) in turn.iter().enumerate() {
                let at = (base + j as i64 * gap_ms).max(state.last_in.saturating_add(1));
                state.last_in = at;
                let id = format!("in-{conversation_id}-{k}-{}", j + 1);
                let (media, payloads) = build_media(&id, &reply.media);
                let message = ChatMessage {
                    message_id: id,
                    direction: Direction::Inbound,
                    timestamp: at,
                    text: reply.text.clone(),
                    media,
                    ocr_text: None,
                    round_index: k,
                    sender: None,
                };
                let seq = self.next_timer_seq;
                self.next_timer_seq += 1;
                self.timers.push(Reverse((at, conversation_id.to_string(), seq)));
                self.pending.insert(
                    seq,
                    Pending {
                        conversation_id: conversation_id.to_string(),
                        actor_id: actor_id.to_string(),
                        message,
                        payloads,
                    },
                );
            }
        }
        self.sent.push(SentRecord {
            conversation_id: conversation_id.to_string(),
            actor_id: actor_id.to_string(),
            message_id: message_id.clone(),
            text: text.to_string(),
            sent_at,
        });
        Ok(DeliveryReceipt { message_id, sent_at })
    }

    fn advance_to(&mut self, target: Timestamp) -> usize {
        let mut fired = 0;
        while let Some(Reverse((at, _, seq))) = self.timers.peek().cloned() {
            if at > target {
                break;
            }
            self.timers.pop();
            let p = self.pending.remove(&seq).expect("timer payload");
            if let Some(state) = self.personas.get_mut(&p.actor_id) {
                state.last_delivered = at;
            }
            let sequence = self.delivered.len() as u64 + 1;
            self.delivered.push(InboundEvent {
                conversation_id: p.conversation_id,
                actor_id: p.actor_id,
                message: p.message,
                payloads: p.payloads,
                received_at: at,
                sequence,
            });
            fired += 1;
        }
        self.now = self.now.max(target);
        fired
    }
}

impl Transport for Simnet {
    fn kind(&self) -> TransportKind {
        TransportKind::Simnet
    }

    fn now(&self) -> Timestamp {
        self.now
    }

    fn query_directory(&mut self, query: &DirectoryQuery) -> Result<Vec<ChannelHandle>, TransportError> {
        let key = query.normalized();
        let mut found: Vec<ChannelHandle> = self
            .scenario
            .directory
            .iter()
            .filter(|(k, _)| normalize_keyword(k) == key)
            .flat_map(|(_, hs)| hs.iter())
            .map(|h| canonicalize_handle(h).expect("validated"))
            .collect();
        found.sort();
        found.dedup();
        found.truncate(query.max_results);
        Ok(found)
    }

    fn join_channel(&mut self, handle: &ChannelHandle) -> Result<JoinConfirmation, TransportError> {
        let ch = self.channel(handle)?;
        if ch.spec.join_rejected {
            return Err(TransportError::JoinRejected(handle.canonical.clone()));
        }
        let title = ch.spec.title.clone();
        let already_joined = !self.joined.insert(handle.canonical.clone());
        Ok(JoinConfirmation { handle: handle.clone(), title, already_joined })
    }

    fn fetch_history(&mut self, handle: &ChannelHandle, limit: usize) -> Result<History, TransportError> {
        let ch = self.channel(handle)?;
        if !self.joined.contains(&handle.canonical) {
            return Err(TransportError::NotJoined(handle.canonical.clone()));
        }
        let messages = ch.posts.iter().rev().take(limit).cloned().collect();
        Ok(History { messages, pinned: ch.pins.clone() })
    }

    fn probe_actor(&mut self, actor_id: &str) -> Result<bool, TransportError> {
        Ok(self.personas.contains_key(actor_id))
    }

    fn send_message(&mut self, target: &SendTarget, message: &ApprovedMessage) -> Result<DeliveryReceipt, TransportError> {
        match target {
            SendTarget::Channel(h) => {
                self.channel(h)?;
                Err(TransportError::ReadOnlyChannel(h.canonical.clone()))
            }
            SendTarget::Actor(actor) => self.deliver_outbound(actor, message.conversation_id(), message.text()),
        }
    }

    fn poll_events(&mut self, since: Timestamp) -> Vec<InboundEvent> {
        let start = self.delivered.partition_point(|e| e.received_at <= since);
        self.delivered[start..].to_vec()
    }

    fn advance_time(&mut self, delta: Duration) -> Result<usize, TransportError> {
        let ms = i64::try_from(delta.as_millis()).unwrap_or(i64::MAX);
        Ok(self.advance_to(self.now.saturating_add(ms)))
    }

    fn next_timer_at(&self) -> Option<Timestamp> {
        self.timers.peek().map(|Reverse((at, _, _))| *at)
    }
}
