use std::collections::HashMap;
use std::convert::Infallible;
use std::path::{Component, Path as FsPath};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use mdtroom_core::case::{extract_case_items, CaseRecord, ItemEdit, RuleBasedExtractor};
use mdtroom_core::debate::{
    AgentProfile, AgentTransport, ControlAction, DebateConfig, EngineError, InterventionRequest,
    LiveTransport, Round, RoundKind, ScriptedTransport, Session, SessionStatus, SystemClock,
};
use mdtroom_core::ids::ConflictId;
use mdtroom_core::llm::ChatClient;
use mdtroom_core::store::{Event, EventLog, FoldTarget, LogWriter, SessionState};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use tracing::{info, warn};

use crate::config::{ServiceConfig, TransportMode};
use crate::error::ApiError;
use crate::views::{render_view, ViewName};

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// One live session. Writers serialize on `engine`; readers only touch
/// `published`, which is extended after every commit.
pub struct SessionHandle {
    session_id: String,
    engine: Mutex<Session>,
    transport: Arc<dyn AgentTransport>,
    published: RwLock<Vec<Event>>,
    latest: watch::Sender<u64>,
}

impl SessionHandle {
    fn new(session: Session, transport: Arc<dyn AgentTransport>) -> Self {
        let events = session.log().events().to_vec();
        let (latest, _) = watch::channel(session.log().last_seq());
        SessionHandle {
            session_id: session.session_id().to_owned(),
            engine: Mutex::new(session),
            transport,
            published: RwLock::new(events),
            latest,
        }
    }

    fn publish(&self, session: &Session) {
        let mut published = self.published.write().unwrap_or_else(|e| e.into_inner());
        let have = published.len();
        published.extend_from_slice(&session.log().events()[have..]);
        self.latest.send_replace(session.log().last_seq());
    }

    /// Runs `op` on the engine and publishes whatever it committed, before
    /// the caller sees the result.
    fn with_engine<T>(
        &self,
        op: impl FnOnce(&mut Session, &dyn AgentTransport) -> Result<T, EngineError>,
    ) -> Result<(T, u64), EngineError> {
        let mut session = lock(&self.engine);
        let result = op(&mut session, self.transport.as_ref());
        self.publish(&session);
        result.map(|t| (t, session.log().last_seq()))
    }

    pub fn last_seq(&self) -> u64 {
        *self.latest.borrow()
    }

    fn event(&self, seq: u64) -> Option<Event> {
        let published = self.published.read().unwrap_or_else(|e| e.into_inner());
        seq.checked_sub(1)
            .and_then(|i| published.get(i as usize))
            .cloned()
    }

    fn log(&self) -> EventLog {
        let published = self.published.read().unwrap_or_else(|e| e.into_inner());
        EventLog::from_events(self.session_id.clone(), published.clone())
    }

    /// Folded state at `at`, or the latest published state.
    fn state_at(&self, at: Option<u64>) -> Result<SessionState, ApiError> {
        let target = at.map_or(FoldTarget::Latest, FoldTarget::Seq);
        Ok(self.log().fold_state(target)?)
    }
}

type TransportFactory = dyn Fn(&CreateSessionRequest) -> Result<Arc<dyn AgentTransport>, ApiError> + Send + Sync;

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<String, Arc<SessionHandle>>>>,
    transports: Arc<TransportFactory>,
}

impl AppState {
    /// Transports come from the configured mode.
    pub fn new(config: ServiceConfig) -> Self {
        let cfg = config.clone();
        Self::with_transport_factory(config, move |req| configured_transport(&cfg, req))
    }

    /// Every session uses `transport`, whatever the configured mode.
    pub fn with_transport(config: ServiceConfig, transport: Arc<dyn AgentTransport>) -> Self {
        Self::with_transport_factory(config, move |_| Ok(transport.clone()))
    }

    pub fn with_transport_factory(
        config: ServiceConfig,
        factory: impl Fn(&CreateSessionRequest) -> Result<Arc<dyn AgentTransport>, ApiError> + Send + Sync + 'static,
    ) -> Self {
        AppState {
            config: Arc::new(config),
            sessions: Arc::new(RwLock::new(HashMap::new())),
            transports: Arc::new(factory),
        }
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

fn configured_transport(
    config: &ServiceConfig,
    req: &CreateSessionRequest,
) -> Result<Arc<dyn AgentTransport>, ApiError> {
    match config.mode {
        TransportMode::Scripted => {
            let root = config
                .fixtures_dir
                .clone()
                .ok_or_else(|| ApiError::internal("scripted mode without fixtures_dir"))?;
            let dir = match &req.fixture_set {
                None => root,
                Some(set) => {
                    let mut parts = FsPath::new(set).components();
                    match (parts.next(), parts.next()) {
                        (Some(Component::Normal(_)), None) => root.join(set),
                        _ => return Err(ApiError::bad_request("fixture_set must be a plain directory name")),
                    }
                }
            };
            Ok(Arc::new(ScriptedTransport::new(dir)))
        }
        TransportMode::Live => {
            let endpoint = config
                .live
                .clone()
                .ok_or_else(|| ApiError::internal("live mode without endpoint"))?;
            let client = ChatClient::new(endpoint).map_err(|e| {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "TransportDown", e.to_string())
            })?;
            Ok(Arc::new(LiveTransport::new(client)))
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(describe_session))
        .route("/api/v1/sessions/{id}/events", get(stream_events))
        .route("/api/v1/sessions/{id}/rounds", post(advance_round))
        .route("/api/v1/sessions/{id}/interventions", post(submit_intervention))
        .route("/api/v1/sessions/{id}/conflicts/{cid}/reeval", post(request_reeval))
        .route("/api/v1/sessions/{id}/control", post(control))
        .route("/api/v1/sessions/{id}/case/edits", post(edit_case))
        .route("/api/v1/sessions/{id}/views/{name}", get(get_view))
        .with_state(state)
}

/// Either a structured case or a narrative to run through the rule-based
/// extractor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub case: Option<CaseRecord>,
    #[serde(default)]
    pub narrative: Option<String>,
    pub agents: Vec<AgentProfile>,
    #[serde(default)]
    pub config: Option<DebateConfig>,
    /// Subdirectory of the fixtures directory to script this session from.
    #[serde(default)]
    pub fixture_set: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub events_url: String,
    pub last_seq: u64,
    pub rounds: usize,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundResponse {
    pub round_index: u32,
    pub seq: u64,
    pub round: Round,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusResponse {
    pub seq: u64,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResponse {
    pub seq: u64,
    pub case: CaseRecord,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(t)| t)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

fn descriptor(handle: &SessionHandle) -> SessionDescriptor {
    let session = lock(&handle.engine);
    SessionDescriptor {
        session_id: handle.session_id.clone(),
        events_url: format!("/api/v1/sessions/{}/events?from=0", handle.session_id),
        last_seq: session.log().last_seq(),
        rounds: session.state().rounds.len(),
        status: session.state().status.clone(),
    }
}

async fn create_session(
    State(app): State<AppState>,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let req = body(payload)?;
    let config = req.config.clone().unwrap_or_else(|| app.config.debate.clone());
    let case = match (&req.case, &req.narrative) {
        (Some(case), _) => case.clone(),
        (None, Some(narrative)) => extract_case_items(narrative, &RuleBasedExtractor)
            .map_err(|e| ApiError::bad_request(e.to_string()))?
            .record,
        (None, None) => return Err(ApiError::bad_request("request needs a case or a narrative")),
    };
    let app2 = app.clone();
    let handle = blocking(move || -> Result<Arc<SessionHandle>, ApiError> {
        let transport = (app2.transports)(&req)?;
        let mut session = Session::create(case, req.agents, config, Arc::new(SystemClock))?;
        if let Some(dir) = &app2.config.data_dir {
            let path = dir.join(format!("{}.mdtlog", session.session_id()));
            let writer = LogWriter::create(path, session.session_id())
                .map_err(EngineError::from)?;
            session.attach_sink(Box::new(writer))?;
        }
        Ok(Arc::new(SessionHandle::new(session, transport)))
    })
    .await??;
    app.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(handle.session_id.clone(), handle.clone());
    info!(session = %handle.session_id, "session created");

    let h = handle.clone();
    let initial = blocking(move || h.with_engine(|s, t| s.run_round(RoundKind::Initial, t).map(|_| ()))).await?;
    if let Err(e) = initial {
        warn!(session = %handle.session_id, error = %e, "initial round failed");
        return Err(ApiError::from(e).with_session(handle.session_id.clone()));
    }
    Ok((StatusCode::CREATED, Json(descriptor(&handle))))
}

async fn describe_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionDescriptor>, ApiError> {
    let handle = app.session(&id)?;
    blocking(move || Json(descriptor(&handle))).await
}

async fn run_round_op(
    handle: Arc<SessionHandle>,
    op: impl FnOnce(&mut Session, &dyn AgentTransport) -> Result<Round, EngineError> + Send + 'static,
) -> Result<Json<RoundResponse>, ApiError> {
    let (round, seq) = blocking(move || handle.with_engine(op)).await??;
    Ok(Json(RoundResponse {
        round_index: round.round_index,
        seq,
        round,
    }))
}

/// Runs the initial round if none committed yet, otherwise the next debate round.
async fn advance_round(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<RoundResponse>, ApiError> {
    let handle = app.session(&id)?;
    run_round_op(handle, |s, t| {
        let kind = if s.state().rounds.is_empty() {
            RoundKind::Initial
        } else {
            RoundKind::Debate
        };
        s.run_round(kind, t).cloned()
    })
    .await
}

async fn submit_intervention(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<InterventionRequest>, JsonRejection>,
) -> Result<Json<RoundResponse>, ApiError> {
    let handle = app.session(&id)?;
    let req = body(payload)?;
    run_round_op(handle, move |s, t| s.submit_intervention(req, t).cloned()).await
}

async fn request_reeval(
    State(app): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
) -> Result<Json<RoundResponse>, ApiError> {
    let handle = app.session(&id)?;
    let cid = ConflictId::new(cid);
    run_round_op(handle, move |s, t| s.request_reeval(&cid, t).cloned()).await
}

async fn control(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ControlAction>, JsonRejection>,
) -> Result<Json<StatusResponse>, ApiError> {
    let handle = app.session(&id)?;
    let action = body(payload)?;
    let (status, seq) = blocking(move || handle.with_engine(|s, _| s.control(action))).await??;
    Ok(Json(StatusResponse { seq, status }))
}

async fn edit_case(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ItemEdit>, JsonRejection>,
) -> Result<Json<CaseResponse>, ApiError> {
    let handle = app.session(&id)?;
    let edit = body(payload)?;
    let (case, seq) = blocking(move || handle.with_engine(|s, _| s.edit_case(edit).cloned())).await??;
    Ok(Json(CaseResponse { seq, case }))
}

#[derive(Debug, Deserialize)]
pub struct ViewQuery {
    pub at: Option<u64>,
    pub round: Option<u32>,
}

async fn get_view(
    State(app): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    Query(q): Query<ViewQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = app.session(&id)?;
    let view: ViewName = name
        .parse()
        .map_err(|m: String| ApiError::new(StatusCode::NOT_FOUND, "UnknownView", m))?;
    blocking(move || {
        let state = handle.state_at(q.at)?;
        Ok(Json(render_view(&state, view, q.round)?))
    })
    .await?
}

#[derive(Debug, Deserialize)]
pub struct StreamQuery {
    #[serde(default)]
    pub from: u64,
}

async fn stream_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let handle = app.session(&id)?;
    let latest = handle.last_seq();
    if q.from > latest {
        return Err(ApiError::new(
            StatusCode::RANGE_NOT_SATISFIABLE,
            "OutOfRange",
            format!("from={} is beyond the latest seq {latest}", q.from),
        ));
    }
    let rx = handle.latest.subscribe();
    let stream = futures::stream::unfold((q.from + 1, rx, handle), |(next, mut rx, handle)| async move {
        loop {
            rx.borrow_and_update();
            if let Some(event) = handle.event(next) {
                let data = serde_json::to_string(&event).expect("events serialize");
                let frame = SseEvent::default().id(next.to_string()).data(data);
                return Some((Ok(frame), (next + 1, rx, handle)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    let heartbeat = Duration::from_secs(app.config.heartbeat_secs.max(1));
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(heartbeat).text("heartbeat")))
}
