//! HTTP surface over a running [`Engine`].
//!
//! Every route except `/health` wants `Authorization: Bearer <token>`. The
//! event stream also accepts the token as `?access_token=`, since browser
//! event sources cannot set headers.

use std::convert::Infallible;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use baitline_core::analytics::{build_report, AnalyticsConfig, AnalyticsError};
use baitline_core::discovery::OfferPatterns;
use baitline_core::domain::{Conversation, Decision, PaymentDisclosure, SessionState, Timestamp};
use baitline_core::engagement::{DecisionAck, DriveOutcome, EngageError, Engine, OperatorAction, PendingDraft};
use baitline_core::filter::{apply_human_verdict, EscalationItem, FilterError};
use baitline_core::runtime::{eligible_actors, refresh_actors, RuntimeError};
use baitline_core::store::{DraftRecord, EventRecord};

/// How the engine's clock moves while serving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Simulated network. With `auto`, every mutation is followed by running
    /// the network forward until only operators can make progress; without
    /// it time moves only through `POST /simnet/advance`.
    Simulated { auto: bool },
    /// Real network: poll and check timeouts every `tick`.
    Wall { tick: Duration },
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub token: String,
    pub clock: Clock,
    pub analytics: AnalyticsConfig,
    pub offer_patterns: OfferPatterns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StreamLine {
    sequence: u64,
    kind: &'static str,
    line: Arc<str>,
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Mutex<Engine>>,
    /// Serialized copy of the log for stream readers, so they never wait
    /// on the engine lock.
    lines: Arc<RwLock<Vec<StreamLine>>>,
    latest: watch::Receiver<u64>,
    options: Arc<GatewayOptions>,
}

fn stream_line(r: &EventRecord) -> StreamLine {
    StreamLine { sequence: r.sequence, kind: r.event.kind(), line: r.to_line().into() }
}

/// A gateway bound to one engine. Build the router with [`Gateway::router`]
/// and, for wall-clock transports, keep [`Gateway::ticker`] running.
pub struct Gateway {
    state: AppState,
}

impl Gateway {
    pub fn new(mut engine: Engine, options: GatewayOptions) -> Self {
        let lines: Arc<RwLock<Vec<StreamLine>>> =
            Arc::new(RwLock::new(engine.store().records().iter().map(stream_line).collect()));
        let (tx, rx) = watch::channel(engine.store().sequence());
        let sink = lines.clone();
        engine.store_mut().subscribe(move |r| {
            sink.write().expect("stream buffer").push(stream_line(r));
            tx.send_replace(r.sequence);
        });
        Self {
            state: AppState { engine: Arc::new(Mutex::new(engine)), lines, latest: rx, options: Arc::new(options) },
        }
    }

    pub fn router(&self) -> Router {
        let authed = Router::new()
            .route("/queue", get(queue))
            .route("/decisions", post(decide))
            .route("/conversations", get(conversations))
            .route("/conversations/{id}", get(transcript))
            .route("/conversations/{id}/terminate", post(terminate))
            .route("/sessions", post(open_session))
            .route("/eligible", get(eligible))
            .route("/escalations", get(escalations))
            .route("/escalations/{id}", post(resolve_escalation))
            .route("/report", get(report))
            .route("/simnet/advance", post(advance))
            .route("/events", get(events))
            .route_layer(middleware::from_fn_with_state(self.state.clone(), require_token));
        Router::new().route("/health", get(|| async { "ok" })).merge(authed).with_state(self.state.clone())
    }

    /// Brings the engine up to date once, e.g. queueing openers for sessions
    /// restored from the log.
    pub async fn settle(&self) -> Result<(), String> {
        let clock = self.state.options.clock;
        blocking(&self.state, move |e| settle(e, clock)).await.map_err(|e| e.message)
    }

    /// Runs forever, polling the transport on the wall clock. Simulated
    /// clocks have nothing to poll, so it just waits.
    pub async fn ticker(&self) {
        let Clock::Wall { tick } = self.state.options.clock else {
            return futures::future::pending().await;
        };
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            let r = blocking(&self.state, |e| {
                let now = e.now();
                e.drive(Some(now)).map(|_| ()).map_err(ApiError::from)
            })
            .await;
            if let Err(err) = r {
                tracing::warn!(error = %err.message, "tick failed");
            }
        }
    }

    /// The engine, for callers that need it back after serving.
    pub fn engine(&self) -> Arc<Mutex<Engine>> {
        self.state.engine.clone()
    }
}

fn settle(engine: &mut Engine, clock: Clock) -> Result<(), ApiError> {
    match clock {
        Clock::Simulated { auto: true } => engine.drive(None).map(|_| ()),
        _ => {
            let now = engine.now();
            engine.drive(Some(now)).map(|_| ())
        }
    }
    .map_err(ApiError::from)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let from_header = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let from_query = (req.uri().path() == "/events")
        .then(|| req.uri().query())
        .flatten()
        .and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("access_token=")));
    let expected = state.options.token.as_str();
    let ok = !expected.is_empty() && [from_header, from_query].into_iter().flatten().any(|t| t == expected);
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token").into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.kind.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<EngageError> for ApiError {
    fn from(e: EngageError) -> Self {
        let (status, kind) = match &e {
            EngageError::UnknownActor(_) => (StatusCode::NOT_FOUND, "UnknownActor"),
            EngageError::UnknownConversation(_) => (StatusCode::NOT_FOUND, "UnknownConversation"),
            EngageError::UnknownDraft(_) => (StatusCode::NOT_FOUND, "UnknownDraft"),
            EngageError::StaleDraft(_) => (StatusCode::CONFLICT, "StaleDraft"),
            EngageError::NotPendingApproval(_) => (StatusCode::CONFLICT, "NotPendingApproval"),
            EngageError::SessionTerminated(_) => (StatusCode::CONFLICT, "SessionTerminated"),
            EngageError::DuplicateSession(_) => (StatusCode::CONFLICT, "DuplicateSession"),
            EngageError::NotApproved(_) => (StatusCode::CONFLICT, "NotApproved"),
            EngageError::InvalidPolicy(_) => (StatusCode::INTERNAL_SERVER_ERROR, "InvalidPolicy"),
            EngageError::Transport(_) => (StatusCode::BAD_GATEWAY, "TransportError"),
            EngageError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StoreError"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        let (status, kind) = match &e {
            FilterError::UnknownEscalation(_) => (StatusCode::NOT_FOUND, "UnknownEscalation"),
            FilterError::UnknownChannel(_) => (StatusCode::NOT_FOUND, "UnknownChannel"),
            FilterError::AlreadyResolved(_) => (StatusCode::CONFLICT, "AlreadyResolved"),
            FilterError::InvalidDecision(_) | FilterError::InvalidVerdict(_) => {
                (StatusCode::BAD_REQUEST, "InvalidDecision")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "StoreError"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Engage(e) => e.into(),
            RuntimeError::Filter(e) => e.into(),
            RuntimeError::Transport(e) => Self::new(StatusCode::BAD_GATEWAY, "TransportError", e.to_string()),
            e => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string()),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "AnalyticsError", e.to_string())
    }
}

/// Runs `f` against the engine off the async workers.
async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&mut Engine) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || {
        let mut e = engine.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut e)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string()))?
}

/// Runs `f`, then lets the clock catch up. The mutation's own result wins
/// even if catching up fails; the failure is logged.
async fn mutate<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&mut Engine) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let clock = state.options.clock;
    blocking(state, move |e| {
        let out = f(e)?;
        if let Err(err) = settle(e, clock) {
            tracing::warn!(error = %err.message, "engine did not settle");
        }
        Ok(out)
    })
    .await
}

fn required(field: &str, value: &str) -> Result<(), ApiError> {
    if value.trim().is_empty() {
        return Err(ApiError::bad_request(format!("{field} must not be empty")));
    }
    Ok(())
}

async fn queue(State(state): State<AppState>) -> Result<Json<Vec<PendingDraft>>, ApiError> {
    blocking(&state, |e| Ok(e.pending())).await.map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub draft_id: String,
    pub decision: OperatorAction,
    pub operator_id: String,
}

async fn decide(
    State(state): State<AppState>,
    Json(req): Json<DecisionRequest>,
) -> Result<Json<DecisionAck>, ApiError> {
    required("operator_id", &req.operator_id)?;
    if let OperatorAction::Edit { text } = &req.decision {
        required("edited text", text)?;
    }
    mutate(&state, move |e| Ok(e.decide(&req.draft_id, req.decision, &req.operator_id)?)).await.map(Json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSummary {
    pub conversation_id: String,
    pub actor_id: String,
    pub state: SessionState,
    pub round_counter: u32,
    pub outcome: Option<baitline_core::domain::OutcomeKind>,
    pub disclosures: usize,
    pub pending_draft: Option<String>,
}

async fn conversations(State(state): State<AppState>) -> Result<Json<Vec<ConversationSummary>>, ApiError> {
    blocking(&state, |e| {
        let snap = e.store().snapshot();
        Ok(snap
            .conversations
            .values()
            .map(|c| ConversationSummary {
                conversation_id: c.conversation_id.clone(),
                actor_id: c.actor.clone(),
                state: c.state,
                round_counter: c.round_counter,
                outcome: c.outcome.as_ref().map(|o| o.kind),
                disclosures: snap.disclosures.get(&c.conversation_id).map_or(0, Vec::len),
                pending_draft: snap.open_draft(&c.conversation_id).map(|d| d.draft_id.clone()),
            })
            .collect())
    })
    .await
    .map(Json)
}

/// One conversation with everything a reviewer needs: messages (OCR text
/// inline), disclosures and every draft ever proposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub conversation: Conversation,
    pub disclosures: Vec<PaymentDisclosure>,
    pub drafts: Vec<DraftRecord>,
}

async fn transcript(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Transcript>, ApiError> {
    blocking(&state, move |e| {
        let snap = e.store().snapshot();
        let conversation = snap
            .conversations
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::from(EngageError::UnknownConversation(id.clone())))?;
        let mut drafts: Vec<DraftRecord> =
            snap.drafts.values().filter(|d| d.conversation_id == id).cloned().collect();
        drafts.sort_by_key(|d| d.created_seq);
        Ok(Transcript { conversation, disclosures: snap.disclosures.get(&id).cloned().unwrap_or_default(), drafts })
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorRequest {
    pub operator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub sequence: u64,
}

async fn terminate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<OperatorRequest>,
) -> Result<Json<Ack>, ApiError> {
    required("operator_id", &req.operator_id)?;
    mutate(&state, move |e| Ok(Ack { sequence: e.terminate(&id, &req.operator_id)? })).await.map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenSession {
    pub actor_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opened {
    pub conversation_id: String,
}

async fn open_session(State(state): State<AppState>, Json(req): Json<OpenSession>) -> Result<Json<Opened>, ApiError> {
    mutate(&state, move |e| Ok(Opened { conversation_id: e.open_session(&req.actor_id)? })).await.map(Json)
}

async fn eligible(State(state): State<AppState>) -> Result<Json<Vec<String>>, ApiError> {
    blocking(&state, |e| {
        let snap = e.store().snapshot().clone();
        Ok(eligible_actors(&snap, e.transport_mut())?)
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Default, Deserialize)]
struct EscalationQuery {
    #[serde(default)]
    all: bool,
}

async fn escalations(
    State(state): State<AppState>,
    Query(q): Query<EscalationQuery>,
) -> Result<Json<Vec<EscalationItem>>, ApiError> {
    blocking(&state, move |e| {
        Ok(e.store().snapshot().escalations.values().filter(|i| q.all || i.resolved.is_none()).cloned().collect())
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub verdict: Decision,
    pub rationale: String,
    pub operator_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictAck {
    pub handle: String,
    pub verdict: Decision,
    /// Accounts recorded because the channel is now relevant.
    pub new_actors: usize,
}

async fn resolve_escalation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<VerdictRequest>,
) -> Result<Json<VerdictAck>, ApiError> {
    required("operator_id", &req.operator_id)?;
    required("rationale", &req.rationale)?;
    let patterns = state.options.offer_patterns.clone();
    blocking(&state, move |e| {
        let at = e.now().max(e.store().snapshot().last_at);
        let rationale = format!("{} ({})", req.rationale.trim(), req.operator_id.trim());
        let channel = apply_human_verdict(e.store_mut(), &id, req.verdict, &rationale, at)?;
        let new_actors = refresh_actors(e.store_mut(), &patterns, at)?;
        Ok(VerdictAck { handle: channel.handle.to_string(), verdict: req.verdict, new_actors })
    })
    .await
    .map(Json)
}

async fn report(State(state): State<AppState>) -> Result<Json<baitline_core::analytics::Report>, ApiError> {
    let cfg = state.options.analytics.clone();
    blocking(&state, move |e| Ok(build_report(e.store().snapshot(), &cfg)?)).await.map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvanceRequest {
    /// Milliseconds of simulated time to run. Omit to run until only
    /// operators can make progress.
    #[serde(default)]
    pub millis: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advanced {
    pub now: Timestamp,
    pub outcome: String,
    pub pending: usize,
}

async fn advance(State(state): State<AppState>, Json(req): Json<AdvanceRequest>) -> Result<Json<Advanced>, ApiError> {
    if let Clock::Wall { .. } = state.options.clock {
        return Err(ApiError::new(StatusCode::CONFLICT, "NotSimulated", "the transport runs on the wall clock"));
    }
    blocking(&state, move |e| {
        let until = req.millis.map(|ms| e.now() + ms as Timestamp);
        let outcome = match e.drive(until)? {
            DriveOutcome::Finished => "finished",
            DriveOutcome::AwaitingOperator(_) => "awaiting_operator",
            DriveOutcome::Horizon => "horizon",
        };
        Ok(Advanced { now: e.now(), outcome: outcome.into(), pending: e.pending().len() })
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Default, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: Option<u64>,
}

/// Server-sent events, one log record per frame: `id` is the sequence,
/// `event` the kind and `data` the record exactly as it sits in the log.
/// Resumes after `since`, or after `Last-Event-ID` when the client
/// reconnects on its own.
async fn events(
    State(state): State<AppState>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let last_event_id = match headers.get("last-event-id") {
        Some(v) => Some(
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| ApiError::bad_request("Last-Event-ID must be a sequence number"))?,
        ),
        None => None,
    };
    let since = last_event_id.or(q.since).unwrap_or(0);
    let latest = state.latest.clone();
    let lines = state.lines.clone();
    let batches = stream::unfold((since, latest), move |(mut last, mut latest)| {
        let lines = lines.clone();
        async move {
            loop {
                latest.borrow_and_update();
                let batch: Vec<StreamLine> = {
                    let all = lines.read().expect("stream buffer");
                    let start = (last as usize).min(all.len());
                    all[start..].to_vec()
                };
                if let Some(tail) = batch.last() {
                    last = tail.sequence;
                    return Some((batch, (last, latest)));
                }
                latest.changed().await.ok()?;
            }
        }
    });
    let frames = batches.flat_map(|batch| {
        stream::iter(
            batch.into_iter().map(|l| Ok(SseEvent::default().id(l.sequence.to_string()).event(l.kind).data(&*l.line))),
        )
    });
    Ok(Sse::new(frames).keep_alive(KeepAlive::default()))
}
