//! Wiring for whole runs: building collaborators from a [`RunConfig`] and the
//! discover, engage, analyze and simulate phases on top of them.

mod config;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    FilterSection, GatewaySection, LlmBackend, LlmSection, OcrBackend, OcrSection, RunConfig, StoreSection,
    TransportSection,
};

use crate::analytics::{build_report, export_report, AnalyticsError, Report};
use crate::discovery::{
    extract_actors, record_actors, record_channels, run_discovery, DiscoveryError, OfferPatterns,
};
use crate::domain::{Decision, Timestamp};
use crate::engagement::{DraftPrompts, DriveOutcome, EngageError, Engine, EngineParts, SubstitutionError, SubstitutionTable};
use crate::filter::{judge_pending_channels, FilterError};
use crate::llm::{ChatModel, LlmError, RefusalDetector, RuleModel, ScriptedModel};
use crate::prompts::PromptTemplate;
use crate::store::{Event, EventStore, Snapshot, StoreError, StoreOptions};
use crate::transport::reference::reference_scenario;
use crate::transport::{Scenario, ScenarioError, SentRecord, Simnet, Transport, TransportError, TransportKind};
use crate::vision::{OcrService, PaymentPatterns, TesseractCli, VisionError};

/// Seed of the built-in reference network when neither config nor flags
/// name one.
pub const REFERENCE_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Engage(#[from] EngageError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Substitution(#[from] SubstitutionError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// A phase stopped early; what it finished is in the log.
    #[error("stopped early: {0}")]
    Incomplete(String),
}

impl RuntimeError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RuntimeError::ConfigInvalid(_)
            | RuntimeError::Substitution(_)
            | RuntimeError::Vision(_)
            | RuntimeError::Llm(LlmError::Config(_)) => 2,
            RuntimeError::Discovery(DiscoveryError::InvalidConfig(_) | DiscoveryError::InvalidPattern { .. }) => 2,
            RuntimeError::Engage(EngageError::InvalidPolicy(_)) => 2,
            _ => 1,
        }
    }
}

pub fn build_model(cfg: &RunConfig) -> Result<Arc<dyn ChatModel>, RuntimeError> {
    Ok(match cfg.llm.backend {
        LlmBackend::Rule => Arc::new(RuleModel::default()),
        LlmBackend::Scripted => {
            let path = cfg.llm.script.as_ref().ok_or_else(|| RuntimeError::ConfigInvalid("llm.script missing".into()))?;
            Arc::new(ScriptedModel::load(path)?)
        }
        LlmBackend::Openai => openai_model(cfg)?,
    })
}

#[cfg(feature = "openai")]
fn openai_model(cfg: &RunConfig) -> Result<Arc<dyn ChatModel>, RuntimeError> {
    let c = cfg.llm.openai.clone().ok_or_else(|| RuntimeError::ConfigInvalid("[llm.openai] missing".into()))?;
    Ok(Arc::new(crate::llm::OpenAiCompatModel::new(c)?))
}

#[cfg(not(feature = "openai"))]
fn openai_model(_: &RunConfig) -> Result<Arc<dyn ChatModel>, RuntimeError> {
    Err(RuntimeError::ConfigInvalid("built without the openai feature".into()))
}

pub fn offer_patterns(cfg: &RunConfig) -> Result<OfferPatterns, RuntimeError> {
    Ok(match &cfg.offer_patterns {
        Some(p) => OfferPatterns::new(p.clone())?,
        None => OfferPatterns::default(),
    })
}

pub fn engine_parts(cfg: &RunConfig, model: Arc<dyn ChatModel>) -> Result<EngineParts, RuntimeError> {
    let mut parts = EngineParts::new(cfg.engagement.clone(), model);
    if let Some(path) = &cfg.substitution_table {
        parts.prompts = DraftPrompts::new(
            PromptTemplate::engagement_system(),
            PromptTemplate::engagement_neutral(),
            SubstitutionTable::load(path)?,
        )?;
    }
    if let Some(p) = &cfg.payment_patterns {
        parts.payments = PaymentPatterns::new(p.clone())?;
    }
    if cfg.ocr.engine == OcrBackend::Tesseract {
        let mut t = TesseractCli::default();
        if let Some(b) = &cfg.ocr.tesseract_binary {
            t.binary = b.clone();
        }
        if let Some(l) = &cfg.ocr.tesseract_languages {
            t.languages = l.clone();
        }
        parts.ocr = OcrService::new(t);
    }
    Ok(parts)
}

pub fn open_store(cfg: &RunConfig) -> Result<EventStore, RuntimeError> {
    Ok(EventStore::open(&cfg.store.path, StoreOptions { fsync: cfg.store.fsync })?)
}

/// The configured scenario file, or the reference network, with the run
/// seed applied.
pub fn load_scenario(cfg: &RunConfig) -> Result<Scenario, RuntimeError> {
    let mut scenario = match &cfg.transport.scenario {
        Some(path) => Scenario::load(path)?,
        None => reference_scenario(cfg.seed.unwrap_or(REFERENCE_SEED)),
    };
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

/// Outbound traffic recorded in `store`, in send order.
pub fn sent_records(store: &EventStore) -> Vec<SentRecord> {
    let snap = store.snapshot();
    store
        .records()
        .iter()
        .filter_map(|r| match &r.event {
            Event::MessageSent { conversation_id, message, .. } => Some(SentRecord {
                conversation_id: conversation_id.clone(),
                actor_id: snap.conversations.get(conversation_id).map(|c| c.actor.clone()).unwrap_or_default(),
                message_id: message.message_id.clone(),
                text: message.text.clone(),
                sent_at: message.timestamp,
            }),
            _ => None,
        })
        .collect()
}

/// A transport positioned where `store` left off. The simulated network is
/// rebuilt from the outbound messages already in the log.
pub fn build_transport(cfg: &RunConfig, store: &EventStore) -> Result<Box<dyn Transport>, RuntimeError> {
    match cfg.transport.kind {
        TransportKind::Simnet => {
            let scenario = load_scenario(cfg)?;
            let now = store.snapshot().last_at;
            Ok(Box::new(Simnet::restore(scenario, &sent_records(store), now)?))
        }
        TransportKind::Live => live_transport(cfg),
    }
}

#[cfg(feature = "live")]
fn live_transport(cfg: &RunConfig) -> Result<Box<dyn Transport>, RuntimeError> {
    if !cfg.transport.enable_live {
        return Err(RuntimeError::ConfigInvalid("live transport not enabled".into()));
    }
    let config = crate::transport::LiveConfig { credentials_env: cfg.transport.credentials_env.clone() };
    Ok(Box::new(crate::transport::LiveTransport::new(config)))
}

#[cfg(not(feature = "live"))]
fn live_transport(_: &RunConfig) -> Result<Box<dyn Transport>, RuntimeError> {
    Err(RuntimeError::ConfigInvalid("built without the live feature".into()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoverSummary {
    pub keywords: Vec<String>,
    pub keywords_degraded: bool,
    pub harvested: usize,
    pub new_channels: usize,
    pub skipped: Vec<String>,
    pub beyond_cap: usize,
    pub aborted: Option<String>,
    pub relevant: usize,
    pub irrelevant: usize,
    pub escalated: usize,
    pub new_actors: usize,
}

/// Harvests channels, judges the unjudged ones and records every offer
/// poster found in a relevant channel. Safe to rerun.
pub fn discover(
    cfg: &RunConfig,
    store: &mut EventStore,
    transport: &mut dyn Transport,
    model: &dyn ChatModel,
) -> Result<DiscoverSummary, RuntimeError> {
    let report = run_discovery(&cfg.discovery, transport, model, &PromptTemplate::synonyms())?;
    let at = transport.now().max(store.snapshot().last_at);
    let new_channels = record_channels(store, &report.records, at)?;
    let judged = judge_pending_channels(
        store,
        model,
        &PromptTemplate::relevance(),
        &RefusalDetector::default(),
        cfg.filter.digest_budget,
        at,
    )?;
    let new_actors = refresh_actors(store, &offer_patterns(cfg)?, at)?;
    Ok(DiscoverSummary {
        keywords: report.keywords.terms,
        keywords_degraded: report.keywords.degraded,
        harvested: report.records.len(),
        new_channels,
        skipped: report.skipped.into_iter().map(|s| s.handle).collect(),
        beyond_cap: report.beyond_cap.len(),
        aborted: report.aborted,
        relevant: judged.relevant,
        irrelevant: judged.irrelevant,
        escalated: judged.escalated,
        new_actors,
    })
}

/// Records offer posters from every channel currently judged relevant.
/// Called again after a human settles an escalation.
pub fn refresh_actors(store: &mut EventStore, patterns: &OfferPatterns, at: Timestamp) -> Result<usize, RuntimeError> {
    let relevant: Vec<_> = store
        .snapshot()
        .channels
        .values()
        .filter(|c| c.verdict.as_ref().is_some_and(|v| v.decision == Decision::Relevant))
        .cloned()
        .collect();
    let actors = extract_actors(&relevant, patterns);
    Ok(record_actors(store, &actors, at)?)
}

/// Recorded accounts without a session that the network says can be
/// messaged, sorted by id.
pub fn eligible_actors(snapshot: &Snapshot, transport: &mut dyn Transport) -> Result<Vec<String>, RuntimeError> {
    let contacted: std::collections::BTreeSet<&str> =
        snapshot.conversations.values().map(|c| c.actor.as_str()).collect();
    let mut out = Vec::new();
    for id in snapshot.actors.keys() {
        if !contacted.contains(id.as_str()) && transport.probe_actor(id)? {
            out.push(id.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngageSummary {
    pub opened: Vec<String>,
    pub outcome: String,
}

/// Opens a session with every eligible account, then runs the engine until
/// all sessions end, an operator is needed, or `until` passes.
pub fn engage(engine: &mut Engine, until: Option<Timestamp>) -> Result<EngageSummary, RuntimeError> {
    let actors = {
        let snapshot = engine.store().snapshot().clone();
        eligible_actors(&snapshot, engine.transport_mut())?
    };
    let mut opened = Vec::new();
    for a in actors {
        opened.push(engine.open_session(&a)?);
    }
    let outcome = match engine.drive(until)? {
        DriveOutcome::Finished => "finished".to_string(),
        DriveOutcome::AwaitingOperator(n) => format!("awaiting operator on {n} drafts"),
        DriveOutcome::Horizon => "time limit reached".to_string(),
    };
    Ok(EngageSummary { opened, outcome })
}

pub fn analyze(snapshot: &Snapshot, cfg: &RunConfig, out: &Path) -> Result<Report, RuntimeError> {
    let report = build_report(snapshot, &cfg.analytics)?;
    export_report(&report, out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub discover: DiscoverSummary,
    pub engage: EngageSummary,
    pub report: Report,
}

/// Discover, engage with auto-approval, analyze: the whole pipeline on the
/// simulated network, logging to the configured store.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulationSummary, RuntimeError> {
    if cfg.transport.kind != TransportKind::Simnet {
        return Err(RuntimeError::ConfigInvalid("simulate runs on the simnet transport only".into()));
    }
    let mut cfg = cfg.clone();
    cfg.engagement.auto_approve = true;
    cfg.validate()?;
    let model = build_model(&cfg)?;
    let mut store = open_store(&cfg)?;
    if store.sequence() > 0 {
        return Err(RuntimeError::ConfigInvalid(format!(
            "simulate needs an empty store, {} already holds {} events",
            cfg.store.path.display(),
            store.sequence()
        )));
    }
    let mut transport = build_transport(&cfg, &store)?;
    let discover = discover(&cfg, &mut store, transport.as_mut(), model.as_ref())?;
    if let Some(reason) = &discover.aborted {
        return Err(RuntimeError::Incomplete(format!("discovery: {reason}")));
    }
    let mut engine = Engine::new(engine_parts(&cfg, model)?, transport, store)?;
    let engage = engage(&mut engine, None)?;
    let (_, store) = engine.into_parts();
    let report = analyze(store.snapshot(), &cfg, out)?;
    Ok(SimulationSummary { discover, engage, report })
}
