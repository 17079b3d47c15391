//! Channel discovery: directory bootstrap, cross-link expansion, harvest and
//! candidate account extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    canonicalize_handle, ActorProfile, ChannelHandle, ChannelRecord, ChatMessage, Classification, DiscoverySource,
    Timestamp,
};
use crate::llm::{ChatModel, ChatRequest, ChatTurn, Purpose};
use crate::prompts::PromptTemplate;
use crate::store::{Event, EventStore, StoreError};
use crate::transport::{normalize_keyword, DirectoryQuery, Transport, TransportError};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("invalid discovery config: {0}")]
    InvalidConfig(String),
    #[error("invalid offer pattern {pattern:?}: {source}")]
    InvalidPattern { pattern: String, source: regex::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub seed_keywords: Vec<String>,
    /// Model-suggested synonyms kept per seed keyword.
    pub synonym_fanout: usize,
    /// Cross-link hops followed from a directory result.
    pub depth_cap: u32,
    /// Newest messages harvested per channel.
    pub harvest_limit: usize,
    pub directory_max_results: usize,
    /// Extra starting handles, harvested at depth 0.
    pub seed_handles: Vec<String>,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            seed_keywords: vec!["nude video chat".into(), "sexy chat".into()],
            synonym_fanout: 3,
            depth_cap: 3,
            harvest_limit: 1000,
            directory_max_results: 100,
            seed_handles: Vec::new(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        if self.harvest_limit == 0 {
            return Err(DiscoveryError::InvalidConfig("harvest_limit must be at least 1".into()));
        }
        if self.directory_max_results == 0 {
            return Err(DiscoveryError::InvalidConfig("directory_max_results must be at least 1".into()));
        }
        if self.seed_keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(DiscoveryError::InvalidConfig("empty seed keyword".into()));
        }
        if self.seed_keywords.is_empty() && self.seed_handles.is_empty() {
            return Err(DiscoveryError::InvalidConfig("no seed keywords or handles".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordExpansion {
    pub terms: Vec<String>,
    /// The model could not be reached for at least one seed; those seeds
    /// were kept without synonyms.
    pub degraded: bool,
}

/// Splits a synonym answer into phrases, dropping list markers and quotes.
fn parse_synonyms(answer: &str) -> Vec<String> {
    answer
        .lines()
        .flat_map(|l| l.split([',', '，', ';']))
        .map(|s| {
            s.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '-' | '*' | '•' | '.' | ')'))
                .trim()
                .trim_matches(|c| matches!(c, '"' | '\'' | '“' | '”'))
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Seeds plus up to `fanout` model synonyms per seed, deduplicated
/// case-insensitively in first-seen order.
pub fn expand_keywords(
    seeds: &[String],
    fanout: usize,
    model: &dyn ChatModel,
    template: &PromptTemplate,
) -> KeywordExpansion {
    let mut seen = BTreeSet::new();
    let mut terms = Vec::new();
    let mut push = |t: &str, terms: &mut Vec<String>| {
        if seen.insert(normalize_keyword(t)) {
            terms.push(t.trim().to_string());
        }
    };
    for s in seeds {
        push(s, &mut terms);
    }
    let mut degraded = false;
    if fanout == 0 {
        return KeywordExpansion { terms, degraded };
    }
    for s in seeds {
        let prompt = template.render(&[("term", s.as_str()), ("fanout", &fanout.to_string())]);
        let request = ChatRequest::new(Purpose::Synonyms, vec![ChatTurn::user(prompt)]);
        match model.complete(&request) {
            Ok(reply) if !reply.refusal => {
                for syn in parse_synonyms(&reply.content).into_iter().take(fanout) {
                    push(&syn, &mut terms);
                }
            }
            Ok(_) => tracing::info!(seed = %s, "synonym request refused"),
            Err(e) => {
                tracing::warn!(seed = %s, error = %e, "synonym expansion unavailable");
                degraded = true;
            }
        }
    }
    KeywordExpansion { terms, degraded }
}

fn link_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:https?://)?(?:www\.)?(?:t|telegram)\.me/(?:s/)?([a-z0-9_]+)|@([a-z0-9_]+)").unwrap()
    })
}

/// `@handle` mentions and t.me links, canonical and deduplicated in order of
/// first occurrence. Mentions glued to a preceding word (e-mail addresses)
/// are ignored, as are private invite links.
pub fn extract_links(text: &str) -> Vec<ChannelHandle> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for cap in link_regex().captures_iter(text) {
        let whole = cap.get(0).expect("match");
        let name = match (cap.get(1), cap.get(2)) {
            (Some(link), _) => link.as_str(),
            (None, Some(mention)) => {
                let glued = text[..whole.start()].chars().next_back().is_some_and(|c| c.is_alphanumeric() || c == '_');
                if glued {
                    continue;
                }
                mention.as_str()
            }
            _ => continue,
        };
        if name.eq_ignore_ascii_case("joinchat") {
            continue;
        }
        if let Ok(h) = canonicalize_handle(name) {
            if seen.insert(h.canonical.clone()) {
                out.push(h);
            }
        }
    }
    out
}

fn message_links(m: &ChatMessage) -> Vec<ChannelHandle> {
    let mut links = extract_links(&m.text);
    if let Some(ocr) = &m.ocr_text {
        links.extend(extract_links(ocr));
    }
    links
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedChannel {
    pub handle: String,
    pub depth: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub keywords: KeywordExpansion,
    /// Sorted by canonical handle.
    pub records: Vec<ChannelRecord>,
    /// Handles that were linked or listed but could not be harvested.
    pub skipped: Vec<SkippedChannel>,
    /// Handles seen one hop beyond the depth cap and left unvisited.
    pub beyond_cap: Vec<String>,
    /// Set when the backend failed and the traversal stopped early.
    pub aborted: Option<String>,
}

#[derive(Debug, Default)]
struct Frontier {
    visited: BTreeSet<String>,
    queue: VecDeque<(ChannelHandle, u32, DiscoverySource)>,
}

impl Frontier {
    fn offer(&mut self, h: ChannelHandle, depth: u32, source: DiscoverySource) {
        if self.visited.insert(h.canonical.clone()) {
            self.queue.push_back((h, depth, source));
        }
    }
}

/// Breadth-first traversal from directory results and seed handles,
/// harvesting every channel reached within `depth_cap` hops.
pub fn run_discovery(
    cfg: &DiscoveryConfig,
    transport: &mut dyn Transport,
    model: &dyn ChatModel,
    synonyms: &PromptTemplate,
) -> Result<DiscoveryReport, DiscoveryError> {
    cfg.validate()?;
    let keywords = expand_keywords(&cfg.seed_keywords, cfg.synonym_fanout, model, synonyms);
    let mut frontier = Frontier::default();
    let mut report = DiscoveryReport {
        keywords: keywords.clone(),
        records: Vec::new(),
        skipped: Vec::new(),
        beyond_cap: Vec::new(),
        aborted: None,
    };

    for raw in &cfg.seed_handles {
        match canonicalize_handle(raw) {
            Ok(h) => frontier.offer(h, 0, DiscoverySource::SeedConfig),
            Err(e) => report.skipped.push(SkippedChannel { handle: raw.clone(), depth: 0, reason: e.to_string() }),
        }
    }
    for kw in &keywords.terms {
        let query = DirectoryQuery::new(kw.clone(), cfg.directory_max_results)
            .map_err(|e| DiscoveryError::InvalidConfig(e.to_string()))?;
        match transport.query_directory(&query) {
            Ok(found) => {
                for h in found {
                    frontier.offer(h, 0, DiscoverySource::DirectoryQuery { keyword: kw.clone() });
                }
            }
            Err(e) => {
                report.aborted = Some(e.to_string());
                return Ok(finish(report));
            }
        }
    }

    let mut beyond = BTreeSet::new();
    while let Some((handle, depth, source)) = frontier.queue.pop_front() {
        let harvested = transport
            .join_channel(&handle)
            .and_then(|joined| Ok((joined, transport.fetch_history(&handle, cfg.harvest_limit)?)));
        let (joined, history) = match harvested {
            Ok(x) => x,
            Err(TransportError::BackendUnavailable(e)) => {
                report.aborted = Some(e);
                break;
            }
            Err(e) => {
                report.skipped.push(SkippedChannel { handle: handle.canonical.clone(), depth, reason: e.to_string() });
                continue;
            }
        };
        let record = ChannelRecord {
            handle: handle.clone(),
            title: joined.title,
            discovery_source: source,
            depth,
            pinned_posts: history.pinned,
            recent_messages: history.messages,
            verdict: None,
        };
        // pins first: they usually carry the channel's own cross-promotion
        let links: Vec<ChannelHandle> = record
            .pinned_posts
            .iter()
            .chain(&record.recent_messages)
            .flat_map(message_links)
            .collect();
        for link in links {
            if link == handle {
                continue;
            }
            if depth < cfg.depth_cap {
                frontier.offer(link, depth + 1, DiscoverySource::CrossLink { parent: handle.canonical.clone() });
            } else if !frontier.visited.contains(&link.canonical) {
                beyond.insert(link.canonical);
            }
        }
        report.records.push(record);
    }
    report.beyond_cap = beyond.into_iter().filter(|h| !frontier.visited.contains(h)).collect();
    Ok(finish(report))
}

fn finish(mut report: DiscoveryReport) -> DiscoveryReport {
    report.records.sort_by(|a, b| a.handle.cmp(&b.handle));
    report.skipped.sort_by(|a, b| a.handle.cmp(&b.handle));
    report
}

/// Appends one `ChannelDiscovered` per record not already in the log.
pub fn record_channels(store: &mut EventStore, records: &[ChannelRecord], at: Timestamp) -> Result<usize, StoreError> {
    let mut added = 0;
    for r in records {
        if store.snapshot().channels.contains_key(&r.handle.canonical) {
            continue;
        }
        store.append(at, Event::ChannelDiscovered { record: r.clone() })?;
        added += 1;
    }
    Ok(added)
}

/// Message patterns that mark a post as a service offer.
#[derive(Debug, Clone)]
pub struct OfferPatterns {
    sources: Vec<String>,
    compiled: Vec<Regex>,
}

impl Default for OfferPatterns {
    fn default() -> Self {
        let patterns = [
            r"pay(ing)? to chat",
            r"paid (video |private )?chat",
            r"video chat (service|session)s?",
            r"private (video )?(chat|show)s? (available|open)",
            r"\b1v1\b",
            r"price list",
            r"dm (me )?for (price|rates)",
            r"裸聊",
            r"付费(视频)?(聊天|私聊)",
            r"私聊我",
            r"\d+\s*分钟\s*\d+\s*元",
        ];
        Self::new(patterns.iter().map(|p| p.to_string()).collect()).expect("default offer patterns compile")
    }
}

impl OfferPatterns {
    /// Case-insensitive regular expressions.
    pub fn new(patterns: Vec<String>) -> Result<Self, DiscoveryError> {
        let compiled = patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|source| DiscoveryError::InvalidPattern { pattern: p.clone(), source })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { sources: patterns, compiled })
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn is_offer(&self, text: &str) -> bool {
        self.compiled.iter().any(|r| r.is_match(text))
    }
}

/// One profile per account that posted a service offer, with every channel
/// it offered in. Sorted by account id.
pub fn extract_actors(records: &[ChannelRecord], patterns: &OfferPatterns) -> Vec<ActorProfile> {
    let mut by_actor: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        for m in r.recent_messages.iter().chain(&r.pinned_posts) {
            let Some(sender) = &m.sender else { continue };
            if patterns.is_offer(&m.full_text()) {
                by_actor.entry(sender.clone()).or_default().insert(r.handle.canonical.clone());
            }
        }
    }
    by_actor
        .into_iter()
        .map(|(actor_id, source_channels)| ActorProfile {
            actor_id,
            source_channels,
            classification: Classification::Unknown,
            first_response_latencies: Vec::new(),
        })
        .collect()
}

/// Appends one `ActorIdentified` per profile not already in the log.
pub fn record_actors(store: &mut EventStore, actors: &[ActorProfile], at: Timestamp) -> Result<usize, StoreError> {
    let mut added = 0;
    for a in actors {
        if store.snapshot().actors.contains_key(&a.actor_id) {
            continue;
        }
        store.append(at, Event::ActorIdentified { profile: a.clone() })?;
        added += 1;
    }
    Ok(added)
}
