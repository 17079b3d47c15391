//! Append-only event log and the state derived from it.
//!
//! `events.log` holds one JSON record per line:
//!
//! ```text
//! {"sequence":1,"at":1700000000000,"kind":"SessionOpened","payload":{...},"checksum":"9f2c..."}
//! ```
//!
//! The checksum is the first 16 hex digits of SHA-256 over
//! `"{sequence}|{at}|{kind}|{payload}"`, with the payload in compact JSON and
//! sorted keys. Sequences start at 1 and have no gaps. Every append is
//! validated against the current [`Snapshot`] before it reaches the file, and
//! replaying the file rebuilds the same snapshot.

mod snapshot;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    ActorProfile, ChannelRecord, ChatMessage, EngagementOutcome, PaymentDisclosure, RelevanceVerdict, Timestamp,
};
use crate::engagement::OperatorAction;
use crate::filter::EscalationItem;
use crate::vision::OcrResult;

pub use snapshot::{DraftRecord, DraftStatus, Filter, RecordKind, Snapshot};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event rejected: {0}")]
    ValidationFailure(String),
    #[error("corrupt log at sequence {sequence}: {reason}")]
    CorruptLog { sequence: u64, reason: String },
    #[error("event log I/O: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Everything the system observed or did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    ChannelDiscovered {
        record: ChannelRecord,
    },
    ChannelJudged {
        handle: String,
        verdict: RelevanceVerdict,
    },
    EscalationQueued {
        item: EscalationItem,
    },
    EscalationResolved {
        escalation_id: String,
        verdict: RelevanceVerdict,
    },
    ActorIdentified {
        profile: ActorProfile,
    },
    SessionOpened {
        conversation_id: String,
        actor_id: String,
    },
    DraftCreated {
        conversation_id: String,
        draft_id: String,
        text: String,
        tier: u32,
    },
    /// A drafting attempt that produced nothing usable: a refusal, or an
    /// unreachable model.
    DraftRefused {
        conversation_id: String,
        tier: u32,
        reason: String,
    },
    OperatorDecision {
        conversation_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        draft_id: Option<String>,
        action: OperatorAction,
        operator: String,
    },
    MessageSent {
        conversation_id: String,
        draft_id: String,
        message: ChatMessage,
    },
    MessageReceived {
        conversation_id: String,
        message: ChatMessage,
    },
    OcrAttached {
        conversation_id: String,
        message_id: String,
        result: OcrResult,
    },
    DisclosureFound {
        conversation_id: String,
        disclosure: PaymentDisclosure,
    },
    SessionTerminated {
        conversation_id: String,
        outcome: EngagementOutcome,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::ChannelDiscovered { .. } => "ChannelDiscovered",
            Event::ChannelJudged { .. } => "ChannelJudged",
            Event::EscalationQueued { .. } => "EscalationQueued",
            Event::EscalationResolved { .. } => "EscalationResolved",
            Event::ActorIdentified { .. } => "ActorIdentified",
            Event::SessionOpened { .. } => "SessionOpened",
            Event::DraftCreated { .. } => "DraftCreated",
            Event::DraftRefused { .. } => "DraftRefused",
            Event::OperatorDecision { .. } => "OperatorDecision",
            Event::MessageSent { .. } => "MessageSent",
            Event::MessageReceived { .. } => "MessageReceived",
            Event::OcrAttached { .. } => "OcrAttached",
            Event::DisclosureFound { .. } => "DisclosureFound",
            Event::SessionTerminated { .. } => "SessionTerminated",
        }
    }

    pub fn conversation_id(&self) -> Option<&str> {
        match self {
            Event::SessionOpened { conversation_id, .. }
            | Event::DraftCreated { conversation_id, .. }
            | Event::DraftRefused { conversation_id, .. }
            | Event::OperatorDecision { conversation_id, .. }
            | Event::MessageSent { conversation_id, .. }
            | Event::MessageReceived { conversation_id, .. }
            | Event::OcrAttached { conversation_id, .. }
            | Event::DisclosureFound { conversation_id, .. }
            | Event::SessionTerminated { conversation_id, .. } => Some(conversation_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub sequence: u64,
    pub at: Timestamp,
    pub event: Event,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    sequence: u64,
    at: Timestamp,
    kind: String,
    payload: Value,
    checksum: String,
}

fn checksum(sequence: u64, at: Timestamp, kind: &str, payload: &Value) -> String {
    let body = format!("{sequence}|{at}|{kind}|{payload}");
    hex::encode(&Sha256::digest(body.as_bytes())[..8])
}

impl EventRecord {
    /// One log line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let tagged = serde_json::to_value(&self.event).expect("events serialize");
        let (kind, payload) = match tagged {
            Value::Object(mut m) => (
                m.remove("kind").and_then(|k| k.as_str().map(String::from)).expect("tagged kind"),
                m.remove("payload").unwrap_or(Value::Null),
            ),
            _ => unreachable!("adjacently tagged enum serializes to an object"),
        };
        let checksum = checksum(self.sequence, self.at, &kind, &payload);
        let wire = WireRecord { sequence: self.sequence, at: self.at, kind, payload, checksum };
        serde_json::to_string(&wire).expect("record serializes")
    }

    /// Parses a line; `expected` is the sequence the line must carry.
    pub fn from_line(line: &str, expected: u64) -> Result<Self, StoreError> {
        let corrupt = |reason: String| StoreError::CorruptLog { sequence: expected, reason };
        let wire: WireRecord = serde_json::from_str(line).map_err(|e| corrupt(format!("unparseable record: {e}")))?;
        if wire.sequence != expected {
            return Err(corrupt(format!("found sequence {} where {expected} was expected", wire.sequence)));
        }
        if checksum(wire.sequence, wire.at, &wire.kind, &wire.payload) != wire.checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let tagged = serde_json::json!({"kind": wire.kind, "payload": wire.payload});
        let event: Event = serde_json::from_value(tagged).map_err(|e| corrupt(format!("bad payload: {e}")))?;
        Ok(EventRecord { sequence: wire.sequence, at: wire.at, event })
    }
}

/// Reads and verifies every record of a log file.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, StoreError> {
    let text = std::fs::read_to_string(path)?;
    parse_log(&text)
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, StoreError> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let expected = out.len() as u64 + 1;
        let Some(end) = rest.find('\n') else {
            return Err(StoreError::CorruptLog { sequence: expected, reason: "torn final record".into() });
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        if line.trim().is_empty() {
            return Err(StoreError::CorruptLog { sequence: expected, reason: "blank line".into() });
        }
        out.push(EventRecord::from_line(line, expected)?);
    }
    Ok(out)
}

/// Rebuilds derived state from records that start at sequence 1.
pub fn replay<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Result<Snapshot, StoreError> {
    replay_onto(Snapshot::default(), records)
}

/// Continues a snapshot with the records that follow it.
pub fn replay_onto<'a>(
    mut snapshot: Snapshot,
    records: impl IntoIterator<Item = &'a EventRecord>,
) -> Result<Snapshot, StoreError> {
    for r in records {
        if r.sequence != snapshot.sequence + 1 {
            return Err(StoreError::CorruptLog {
                sequence: snapshot.sequence + 1,
                reason: format!("found sequence {} where {} was expected", r.sequence, snapshot.sequence + 1),
            });
        }
        snapshot
            .validate(&r.event)
            .map_err(|reason| StoreError::CorruptLog { sequence: r.sequence, reason })?;
        snapshot.apply(r);
    }
    Ok(snapshot)
}

pub fn replay_file(path: &Path) -> Result<Snapshot, StoreError> {
    replay(&read_log(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StoreOptions {
    /// Flush to disk before `append` returns.
    pub fsync: bool,
}

type Listener = Box<dyn Fn(&EventRecord) + Send + Sync>;

/// The single writer of a log. Keeps every record in memory so readers can
/// resume from any sequence.
pub struct EventStore {
    path: Option<PathBuf>,
    file: Option<File>,
    options: StoreOptions,
    records: Vec<EventRecord>,
    snapshot: Snapshot,
    listeners: Vec<Listener>,
}

impl std::fmt::Debug for EventStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventStore")
            .field("path", &self.path)
            .field("sequence", &self.snapshot.sequence)
            .finish()
    }
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            options: StoreOptions::default(),
            records: Vec::new(),
            snapshot: Snapshot::default(),
            listeners: Vec::new(),
        }
    }

    /// Opens or creates a log file, replaying whatever it already holds.
    pub fn open(path: &Path, options: StoreOptions) -> Result<Self, StoreError> {
        let records = if path.exists() { read_log(path)? } else { Vec::new() };
        let snapshot = replay(&records)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            options,
            records,
            snapshot,
            listeners: Vec::new(),
        })
    }

    /// Drops an incomplete final line left by a crash mid-append. Damage
    /// anywhere else is left alone and reported by [`EventStore::open`].
    pub fn recover_torn_tail(path: &Path) -> Result<bool, StoreError> {
        let text = std::fs::read_to_string(path)?;
        if text.is_empty() || text.ends_with('\n') {
            return Ok(false);
        }
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        parse_log(&text[..keep])?;
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(keep as u64)?;
        file.sync_all()?;
        Ok(true)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn sequence(&self) -> u64 {
        self.snapshot.sequence
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Records with a sequence greater than `sequence`.
    pub fn records_since(&self, sequence: u64) -> &[EventRecord] {
        let start = (sequence as usize).min(self.records.len());
        &self.records[start..]
    }

    /// Called after every successful append, in sequence order.
    pub fn subscribe(&mut self, listener: impl Fn(&EventRecord) + Send + Sync + 'static) {
        self.listeners.push(Box::new(listener));
    }

    pub fn append(&mut self, at: Timestamp, event: Event) -> Result<u64, StoreError> {
        self.snapshot.validate(&event).map_err(StoreError::ValidationFailure)?;
        let record = EventRecord { sequence: self.snapshot.sequence + 1, at, event };
        if let Some(file) = self.file.as_mut() {
            let mut line = record.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            if self.options.fsync {
                file.sync_data()?;
            } else {
                file.flush()?;
            }
        }
        self.snapshot.apply(&record);
        for l in &self.listeners {
            l(&record);
        }
        self.records.push(record);
        Ok(self.snapshot.sequence)
    }

    /// Writes `snapshot.<seq>` next to the log, or into `dir` for in-memory stores.
    pub fn write_snapshot(&self, dir: Option<&Path>) -> Result<PathBuf, StoreError> {
        let dir = match (dir, self.path.as_deref().and_then(Path::parent)) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(p)) => p.to_path_buf(),
            (None, None) => PathBuf::from("."),
        };
        let path = dir.join(format!("snapshot.{}", self.snapshot.sequence));
        let body = serde_json::to_string(&self.snapshot).map_err(|e| StoreError::ValidationFailure(e.to_string()))?;
        std::fs::write(&path, body + "\n")?;
        Ok(path)
    }

    /// The whole log as it appears on disk.
    pub fn to_log_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}

/// Loads a compacted snapshot and checks it against the log prefix it claims
/// to summarise, then applies the rest of the log.
pub fn load_with_snapshot(log: &Path, snapshot_path: &Path) -> Result<Snapshot, StoreError> {
    let text = std::fs::read_to_string(snapshot_path)?;
    let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::CorruptLog {
        sequence: 0,
        reason: format!("unreadable snapshot: {e}"),
    })?;
    let records = read_log(log)?;
    let seq = snap.sequence as usize;
    if seq > records.len() {
        return Err(StoreError::CorruptLog {
            sequence: records.len() as u64 + 1,
            reason: "snapshot is ahead of the log".into(),
        });
    }
    replay_onto(snap, &records[seq..])
}
