//! Relevance judgment over channel digests, with human escalation.
//!
//! A model refusal is kept as its own verdict: refusing to read a channel is
//! itself a hint that the channel is worth a human look.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{media_summary, ChannelRecord, Decision, Judge, MediaKind, RelevanceVerdict, Timestamp};
use crate::llm::{ChatModel, ChatRequest, ChatTurn, Purpose, RefusalDetector};
use crate::prompts::PromptTemplate;
use crate::store::{Event, EventStore, StoreError};

pub const DEFAULT_DIGEST_BUDGET: usize = 4000;
const TRUNCATION_MARKER: &str = " [...]";

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("digest has no content")]
    EmptyDigest,
    #[error("only refusal or borderline verdicts are escalated, got {0:?}")]
    InvalidVerdict(Decision),
    #[error("human verdicts must be Relevant or Irrelevant, got {0:?}")]
    InvalidDecision(Decision),
    #[error("escalation {0} is already resolved")]
    AlreadyResolved(String),
    #[error("unknown escalation {0}")]
    UnknownEscalation(String),
    #[error("unknown channel @{0}")]
    UnknownChannel(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDigest {
    pub handle: String,
    pub title: String,
    pub pinned_excerpt: String,
    pub message_excerpt: String,
    pub media_summary: BTreeMap<MediaKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationItem {
    pub escalation_id: String,
    pub handle: String,
    pub model_verdict: RelevanceVerdict,
    pub queued_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<RelevanceVerdict>,
    /// Queued by a reviewer revisiting a settled channel rather than by the model.
    #[serde(default)]
    pub reopened: bool,
}

fn take_budget(lines: impl Iterator<Item = String>, budget: usize) -> (String, usize) {
    let mut out = String::new();
    let mut used = 0;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let sep = usize::from(!out.is_empty());
        let len = line.chars().count();
        if used + sep + len <= budget {
            if sep == 1 {
                out.push('\n');
            }
            out.push_str(&line);
            used += sep + len;
            continue;
        }
        let marker = TRUNCATION_MARKER.chars().count();
        let room = budget.saturating_sub(used + sep + marker);
        if room > 0 {
            if sep == 1 {
                out.push('\n');
            }
            out.extend(line.chars().take(room));
            used += sep + room;
        }
        if used + marker <= budget {
            out.push_str(TRUNCATION_MARKER);
            used += marker;
        }
        break;
    }
    (out, used)
}

impl ChannelDigest {
    /// Pins fill the budget first, then recent messages newest first. The
    /// two excerpts together never exceed `budget` characters.
    pub fn build(record: &ChannelRecord, budget: usize) -> Self {
        let (pinned_excerpt, used) = take_budget(record.pinned_posts.iter().map(|m| m.full_text()), budget);
        let (message_excerpt, _) =
            take_budget(record.recent_messages.iter().map(|m| m.full_text()), budget.saturating_sub(used));
        Self {
            handle: record.handle.canonical.clone(),
            title: record.title.clone(),
            pinned_excerpt,
            message_excerpt,
            media_summary: media_summary(record.pinned_posts.iter().chain(&record.recent_messages)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pinned_excerpt.trim().is_empty()
            && self.message_excerpt.trim().is_empty()
            && self.media_summary.values().all(|n| *n == 0)
    }

    pub fn render(&self) -> String {
        let media = if self.media_summary.is_empty() {
            "none".to_string()
        } else {
            self.media_summary
                .iter()
                .map(|(k, n)| format!("{k:?} x{n}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "Channel: @{}\nTitle: {}\nPinned posts:\n{}\nRecent messages:\n{}\nMedia: {}",
            self.handle, self.title, self.pinned_excerpt, self.message_excerpt, media
        )
    }
}

/// Maps a free-form model answer to a decision: a leading yes or no wins,
/// anything else counts as uncertainty.
pub fn parse_judgment(answer: &str) -> (Decision, String) {
    let trimmed = answer.trim();
    let lower = trimmed.to_lowercase();
    let first: String = lower
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    let decision = match first.as_str() {
        "yes" | "是" | "是的" => Decision::Relevant,
        "no" | "否" | "不是" => Decision::Irrelevant,
        _ => Decision::Borderline,
    };
    let rationale = match decision {
        Decision::Borderline => trimmed.to_string(),
        _ => trimmed[trimmed
            .char_indices()
            .nth(first.chars().count())
            .map_or(trimmed.len(), |(i, _)| i)..]
            .trim_start_matches(|c: char| c.is_whitespace() || "-:,.–，：".contains(c))
            .to_string(),
    };
    (decision, rationale)
}

pub fn judge_relevance(
    digest: &ChannelDigest,
    model: &dyn ChatModel,
    template: &PromptTemplate,
    detector: &RefusalDetector,
) -> Result<RelevanceVerdict, FilterError> {
    if digest.is_empty() {
        return Err(FilterError::EmptyDigest);
    }
    let prompt = template.render(&[("digest", &digest.render())]);
    let request = ChatRequest::new(Purpose::Relevance, vec![ChatTurn::user(prompt)]).with_temperature(0.0);
    let verdict = match model.complete(&request) {
        Err(e) => {
            tracing::warn!(handle = %digest.handle, error = %e, "relevance model unavailable");
            RelevanceVerdict {
                decision: Decision::Borderline,
                rationale: "adapter unavailable".into(),
                judged_by: Judge::Model,
            }
        }
        Ok(reply) if detector.is_refusal(&reply) => RelevanceVerdict {
            decision: Decision::Refusal,
            rationale: if reply.content.trim().is_empty() { "model refused".into() } else { reply.content.trim().to_string() },
            judged_by: Judge::Model,
        },
        Ok(reply) => {
            let (decision, rationale) = parse_judgment(&reply.content);
            RelevanceVerdict { decision, rationale, judged_by: Judge::Model }
        }
    };
    Ok(verdict)
}

pub fn enqueue_escalation(
    store: &mut EventStore,
    verdict: &RelevanceVerdict,
    handle: &str,
    at: Timestamp,
) -> Result<EscalationItem, FilterError> {
    if !verdict.needs_escalation() {
        return Err(FilterError::InvalidVerdict(verdict.decision));
    }
    queue(store, verdict, handle, at, false)
}

fn queue(
    store: &mut EventStore,
    verdict: &RelevanceVerdict,
    handle: &str,
    at: Timestamp,
    reopened: bool,
) -> Result<EscalationItem, FilterError> {
    if !store.snapshot().channels.contains_key(handle) {
        return Err(FilterError::UnknownChannel(handle.to_string()));
    }
    let item = EscalationItem {
        escalation_id: store.snapshot().next_escalation_id(),
        handle: handle.to_string(),
        model_verdict: verdict.clone(),
        queued_at: at,
        resolved: None,
        reopened,
    };
    store.append(at, Event::EscalationQueued { item: item.clone() })?;
    Ok(item)
}

/// Sends a settled channel back to the human queue, e.g. to overturn a
/// model verdict that was never escalated.
pub fn reopen_channel(store: &mut EventStore, handle: &str, at: Timestamp) -> Result<EscalationItem, FilterError> {
    let verdict = store
        .snapshot()
        .channels
        .get(handle)
        .ok_or_else(|| FilterError::UnknownChannel(handle.to_string()))?
        .verdict
        .clone()
        .unwrap_or(RelevanceVerdict {
            decision: Decision::Borderline,
            rationale: "never judged".into(),
            judged_by: Judge::Model,
        });
    queue(store, &verdict, handle, at, true)
}

pub fn apply_human_verdict(
    store: &mut EventStore,
    escalation_id: &str,
    decision: Decision,
    rationale: &str,
    at: Timestamp,
) -> Result<ChannelRecord, FilterError> {
    if !matches!(decision, Decision::Relevant | Decision::Irrelevant) {
        return Err(FilterError::InvalidDecision(decision));
    }
    let item = store
        .snapshot()
        .escalations
        .get(escalation_id)
        .ok_or_else(|| FilterError::UnknownEscalation(escalation_id.to_string()))?;
    if item.resolved.is_some() {
        return Err(FilterError::AlreadyResolved(escalation_id.to_string()));
    }
    let handle = item.handle.clone();
    let verdict = RelevanceVerdict { decision, rationale: rationale.to_string(), judged_by: Judge::Human };
    store.append(at, Event::EscalationResolved { escalation_id: escalation_id.to_string(), verdict })?;
    Ok(store.snapshot().channels[&handle].clone())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub judged: usize,
    pub relevant: usize,
    pub irrelevant: usize,
    pub escalated: usize,
}

/// Judges every channel in the store that has no verdict yet, escalating
/// refusals and borderline answers.
pub fn judge_pending_channels(
    store: &mut EventStore,
    model: &dyn ChatModel,
    template: &PromptTemplate,
    detector: &RefusalDetector,
    budget: usize,
    at: Timestamp,
) -> Result<FilterReport, FilterError> {
    let pending: Vec<ChannelRecord> = store
        .snapshot()
        .channels
        .values()
        .filter(|c| c.verdict.is_none())
        .cloned()
        .collect();
    let mut report = FilterReport::default();
    for record in pending {
        let digest = ChannelDigest::build(&record, budget);
        let verdict = match judge_relevance(&digest, model, template, detector) {
            Ok(v) => v,
            Err(FilterError::EmptyDigest) => RelevanceVerdict {
                decision: Decision::Borderline,
                rationale: "channel has no readable content".into(),
                judged_by: Judge::Model,
            },
            Err(e) => return Err(e),
        };
        let handle = record.handle.canonical.clone();
        store.append(at, Event::ChannelJudged { handle: handle.clone(), verdict: verdict.clone() })?;
        report.judged += 1;
        match verdict.decision {
            Decision::Relevant => report.relevant += 1,
            Decision::Irrelevant => report.irrelevant += 1,
            _ => {}
        }
        if verdict.needs_escalation() {
            enqueue_escalation(store, &verdict, &handle, at)?;
            report.escalated += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::msg;
    use crate::domain::{canonicalize_handle, Direction, DiscoverySource};

    fn record(pins: &[&str], posts: &[&str]) -> ChannelRecord {
        ChannelRecord {
            handle: canonicalize_handle("@chan").unwrap(),
            title: "t".into(),
            discovery_source: DiscoverySource::SeedConfig,
            depth: 0,
            pinned_posts: pins.iter().enumerate().map(|(i, t)| msg(&format!("pin{i}"), Direction::Inbound, i as i64, t, 0)).collect(),
            recent_messages: posts.iter().enumerate().map(|(i, t)| msg(&format!("p{i}"), Direction::Inbound, i as i64, t, 0)).collect(),
            verdict: None,
        }
    }

    #[test]
    fn digest_puts_pins_first_and_respects_budget() {
        let long = "x".repeat(50);
        let r = record(&[&long, &long], &[&long]);
        let d = ChannelDigest::build(&r, 80);
        assert!(d.pinned_excerpt.starts_with(&long));
        assert!(d.pinned_excerpt.ends_with(TRUNCATION_MARKER));
        assert!(d.message_excerpt.is_empty());
        assert!(d.pinned_excerpt.chars().count() + d.message_excerpt.chars().count() <= 80);
    }

    #[test]
    fn digest_fits_everything_under_budget() {
        let r = record(&["pin"], &["a", "b"]);
        let d = ChannelDigest::build(&r, DEFAULT_DIGEST_BUDGET);
        assert_eq!(d.pinned_excerpt, "pin");
        assert_eq!(d.message_excerpt, "a\nb");
    }

    #[test]
    fn judgment_parsing() {
        assert_eq!(parse_judgment("yes - sells chats"), (Decision::Relevant, "sells chats".into()));
        assert_eq!(parse_judgment("No: cooking").0, Decision::Irrelevant);
        assert_eq!(parse_judgment("Maybe, hard to say").0, Decision::Borderline);
        assert_eq!(parse_judgment("yesterday I saw").0, Decision::Borderline);
        assert_eq!(parse_judgment("是，提供付费聊天").0, Decision::Relevant);
    }
}
