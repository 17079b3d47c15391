//! Simnet topology and persona scripts, loadable from JSON.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "start_ms": 1700000000000,
//!   "burst_gap_secs": 2,
//!   "channels": [{"handle": "vchat_hub", "title": "...", "posts": [...], "pins": [...]}],
//!   "directory": {"nude video chat": ["vchat_hub"]},
//!   "personas": [{"actor_id": "acct-001", "kind": {"type": "fast_individual"}, "script": [[{"text": "hi"}]]}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{canonicalize_handle, MediaKind, Timestamp};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PersonaKind {
    FastIndividual,
    SlowPlatform,
    BotGreeter,
    Ghost,
    Disengager { after_rounds: u32 },
    Upseller,
}

impl PersonaKind {
    /// Defaults reflect the observed shapes: individuals answer in about a
    /// minute, platforms anywhere from half an hour to two hours.
    pub fn default_latency(&self) -> LatencySpec {
        match self {
            PersonaKind::FastIndividual | PersonaKind::Disengager { .. } => LatencySpec::Fixed { secs: 60.0 },
            PersonaKind::SlowPlatform => LatencySpec::Uniform { min_secs: 1800.0, max_secs: 7200.0 },
            PersonaKind::BotGreeter => LatencySpec::Fixed { secs: 2.0 },
            PersonaKind::Upseller => LatencySpec::Fixed { secs: 90.0 },
            PersonaKind::Ghost => LatencySpec::Fixed { secs: 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySpec {
    Fixed { secs: f64 },
    Uniform { min_secs: f64, max_secs: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaSpec {
    #[serde(default = "image_kind")]
    pub kind: MediaKind,
    #[serde(default)]
    pub person_labels: Vec<String>,
    /// Visible text (including any QR payload string) of the image.
    #[serde(default)]
    pub payload: String,
}

fn image_kind() -> MediaKind {
    MediaKind::Image
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyMessage {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub actor_id: String,
    pub kind: PersonaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_latency: Option<LatencySpec>,
    /// One entry per round; each entry is a burst of messages.
    #[serde(default)]
    pub script: Vec<Vec<ReplyMessage>>,
    /// Sends after this many of our messages are refused as blocked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks_after: Option<u32>,
}

impl PersonaSpec {
    pub fn latency(&self) -> LatencySpec {
        self.reply_latency.clone().unwrap_or_else(|| self.kind.default_latency())
    }

    pub fn disengage_after(&self) -> Option<u32> {
        match self.kind {
            PersonaKind::Disengager { after_rounds } => Some(after_rounds),
            PersonaKind::Ghost => Some(0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub handle: String,
    #[serde(default)]
    pub title: String,
    /// Oldest first.
    #[serde(default)]
    pub posts: Vec<PostSpec>,
    #[serde(default)]
    pub pins: Vec<PostSpec>,
    #[serde(default)]
    pub join_rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_ms: Timestamp,
    #[serde(default = "default_burst_gap")]
    pub burst_gap_secs: f64,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub directory: BTreeMap<String, Vec<String>>,
    /// Accounts that accept direct messages. Anyone else seen posting in a
    /// channel is unreachable.
    #[serde(default)]
    pub personas: Vec<PersonaSpec>,
}

fn default_start() -> Timestamp {
    1_700_000_000_000
}

fn default_burst_gap() -> f64 {
    2.0
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            start_ms: default_start(),
            burst_gap_secs: default_burst_gap(),
            channels: Vec::new(),
            directory: BTreeMap::new(),
            personas: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        let mut handles = BTreeSet::new();
        for c in &self.channels {
            let h = canonicalize_handle(&c.handle).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if !handles.insert(h.canonical) {
                return invalid(format!("duplicate channel {}", c.handle));
            }
        }
        for (keyword, listed) in &self.directory {
            for h in listed {
                let h = canonicalize_handle(h).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                if !handles.contains(&h.canonical) {
                    return invalid(format!("directory entry {keyword:?} lists unknown channel @{}", h.canonical));
                }
            }
        }
        let mut actors = BTreeSet::new();
        for p in &self.personas {
            if !actors.insert(p.actor_id.as_str()) {
                return invalid(format!("duplicate persona {}", p.actor_id));
            }
            if p.kind == PersonaKind::Ghost && !p.script.is_empty() {
                return invalid(format!("ghost persona {} has a script", p.actor_id));
            }
            match p.latency() {
                LatencySpec::Fixed { secs } if secs < 0.0 => {
                    return invalid(format!("negative latency for {}", p.actor_id))
                }
                LatencySpec::Uniform { min_secs, max_secs } if min_secs < 0.0 || max_secs < min_secs => {
                    return invalid(format!("bad latency range for {}", p.actor_id))
                }
                _ => {}
            }
        }
        if self.burst_gap_secs <= 0.0 {
            return invalid("burst_gap_secs must be positive".into());
        }
        Ok(())
    }
}
