//! HTTP session endpoints, the per-session pacer and the websocket feed.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use interrupt_engine::policy::PolicyKind;
use interrupt_engine::rng::derive_seed;
use interrupt_engine::sim::{ExperimentConfig, TrialLog, TrialSetup, TrialSim, WizardSource};
use interrupt_engine::TICK_SECONDS;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use crate::export::{agreement_report, export_annotations, AgreementReport, AnnotationExport};
use crate::protocol::{Body, EndReason, Ended, Envelope, ErrorCode, ErrorPayload};
use crate::session::{DecisionKind, DecisionRecord, Mode, Replay, SessionCore, SessionInfo};
use crate::ServiceError;

const FEED_CAPACITY: usize = 256;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub experiment: ExperimentConfig,
    /// Recorded logs available to ANNOTATE_REPLAY sessions, by trial id.
    pub replays: Vec<Replay>,
    /// Session artifacts are written here when a session ends or closes.
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub mode: Option<Mode>,
    /// Trial id of a replay (ANNOTATE_REPLAY).
    #[serde(default)]
    pub replay: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub time_scale: Option<f64>,
    #[serde(default)]
    pub long_first: Option<bool>,
    #[serde(default)]
    pub trial_id: Option<String>,
}

struct SessionHandle {
    core: Mutex<SessionCore>,
    feed: broadcast::Sender<Arc<str>>,
    clients: AtomicUsize,
    created: Instant,
    pacer: Mutex<Option<JoinHandle<()>>>,
}

impl SessionHandle {
    fn info(&self) -> SessionInfo {
        self.core.lock().unwrap().info(self.clients.load(Ordering::SeqCst))
    }
}

struct Shared {
    config: ServiceConfig,
    sessions: Mutex<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

/// Cheap to clone; all clones share the same sessions.
#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn unknown(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match e {
            ServiceError::Config(_) => StatusCode::BAD_REQUEST,
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, "service", e.to_string())
    }
}

impl Service {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.experiment.validate()?;
        if !(config.experiment.serve.time_scale > 0.0 && config.experiment.serve.time_scale.is_finite()) {
            return Err(ServiceError::Config("serve.time_scale must be positive".into()));
        }
        Ok(Self {
            shared: Arc::new(Shared { config, sessions: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1) }),
        })
    }

    fn get(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.shared.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::unknown(id))
    }

    /// Creates a session and starts its pacer.
    pub fn create(&self, req: CreateSession) -> Result<SessionInfo, ServiceError> {
        let cfg = &self.shared.config;
        let n = self.shared.next_id.fetch_add(1, Ordering::SeqCst);
        let id = format!("s{n}");
        let scale = req.time_scale.unwrap_or(cfg.experiment.serve.time_scale);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ServiceError::Config(format!("time_scale must be positive, got {scale}")));
        }
        let core = match req.mode.unwrap_or(Mode::WozLive) {
            Mode::WozLive => {
                let trial_id = req.trial_id.clone().unwrap_or_else(|| format!("woz-live-{id}"));
                let sim = TrialSim::new(TrialSetup {
                    trial_id: trial_id.clone(),
                    condition: PolicyKind::Woz,
                    config: cfg.experiment.clone(),
                    model: None,
                    wizard: Some(WizardSource::Live),
                    long_first: req.long_first.unwrap_or(false),
                    seed: req.seed.unwrap_or_else(|| derive_seed(cfg.seed, &[n])),
                })?;
                SessionCore::live(id.clone(), sim, trial_id, scale)
            }
            Mode::AnnotateReplay => {
                let name = req.replay.as_deref().or_else(|| (cfg.replays.len() == 1).then(|| cfg.replays[0].trial_id.as_str()));
                let replay = cfg
                    .replays
                    .iter()
                    .find(|r| Some(r.trial_id.as_str()) == name)
                    .ok_or_else(|| ServiceError::Config(format!("no replay named {name:?}")))?;
                SessionCore::replay(id.clone(), replay.clone(), cfg.experiment.fusion, scale)
            }
        };
        let (feed, _) = broadcast::channel(FEED_CAPACITY);
        let handle = Arc::new(SessionHandle {
            core: Mutex::new(core),
            feed,
            clients: AtomicUsize::new(0),
            created: Instant::now(),
            pacer: Mutex::new(None),
        });
        let info = handle.info();
        self.shared.sessions.lock().unwrap().insert(id.clone(), handle.clone());
        let out = cfg.out_dir.clone();
        let task = tokio::spawn(pace(handle.clone(), scale, out));
        *handle.pacer.lock().unwrap() = Some(task);
        log::info!("session {id} created ({:?}, trial {})", info.mode, info.trial_id);
        Ok(info)
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        self.shared.sessions.lock().unwrap().values().map(|h| h.info()).collect()
    }

    /// Stops the session, finishing a live simulation, and writes its
    /// artifacts.
    pub fn close(&self, id: &str) -> Result<SessionInfo, ServiceError> {
        let handle = self.shared.sessions.lock().unwrap().remove(id).ok_or_else(|| ServiceError::UnknownSession(id.into()))?;
        if let Some(task) = handle.pacer.lock().unwrap().take() {
            task.abort();
        }
        let mut core = handle.core.lock().unwrap();
        core.finish_live()?;
        let msg = Envelope::new(id, core.clock(), Body::Ended(Ended { reason: EndReason::Closed, mode: core.mode }));
        let _ = handle.feed.send(msg.to_text().into());
        if let Some(dir) = &self.shared.config.out_dir {
            write_artifacts(&core, dir)?;
        }
        log::info!("session {id} closed");
        Ok(core.info(handle.clients.load(Ordering::SeqCst)))
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/sessions", get(list_sessions).post(create_session))
            .route("/sessions/{id}", get(get_session).delete(delete_session))
            .route("/sessions/{id}/decisions", get(get_decisions))
            .route("/sessions/{id}/export", get(get_export))
            .route("/sessions/{id}/agreement", get(get_agreement))
            .route("/sessions/{id}/trial_log", get(get_trial_log))
            .route("/sessions/{id}/ws", get(ws_upgrade))
            .with_state(self.clone())
    }
}

pub async fn bind(addr: &str) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr: addr.to_string(), source })
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, service: Service, shutdown: F) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, service.router())
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| ServiceError::Io { path: "<listener>".into(), source })
}

fn annotators(decisions: &[DecisionRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for d in decisions {
        if matches!(d.kind, DecisionKind::Label(_)) && !out.contains(&d.annotator_id) {
            out.push(d.annotator_id.clone());
        }
    }
    out
}

fn write_artifacts(core: &SessionCore, dir: &FsPath) -> Result<(), ServiceError> {
    let io = |path: &FsPath| {
        let path = path.display().to_string();
        move |source| ServiceError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let decisions = dir.join(format!("{}.decisions.json", core.id));
    let text = serde_json::to_string_pretty(core.decisions()).expect("decisions serialize");
    std::fs::write(&decisions, text).map_err(io(&decisions))?;
    if let Some(log) = core.trial_log() {
        log.write(&dir.join(format!("{}.trial_log.json", core.id)))?;
    }
    for a in annotators(core.decisions()) {
        let export = export_annotations(&core.trial_id, core.decisions(), &a, core.ticks())?;
        export.write_csv(&dir.join(format!("{}.{a}.labels.csv", core.id)))?;
    }
    Ok(())
}

async fn pace(handle: Arc<SessionHandle>, scale: f64, out: Option<PathBuf>) {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(TICK_SECONDS / scale));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let mut core = handle.core.lock().unwrap();
        // Sent under the lock so that a joining client sees each snapshot
        // exactly once: either as the latest or on the feed.
        match core.step() {
            Ok(Some(snapshot)) => {
                let msg = Envelope::new(&core.id, snapshot.t_scene, Body::Snapshot(snapshot));
                let _ = handle.feed.send(msg.to_text().into());
            }
            Ok(None) => {
                let msg =
                    Envelope::new(&core.id, core.clock(), Body::Ended(Ended { reason: EndReason::StreamEnd, mode: core.mode }));
                let _ = handle.feed.send(msg.to_text().into());
                if let Some(dir) = &out {
                    if let Err(e) = write_artifacts(&core, dir) {
                        log::error!("session {}: {e}", core.id);
                    }
                }
                return;
            }
            Err(e) => {
                log::error!("session {}: {e}", core.id);
                return;
            }
        }
    }
}

async fn create_session(
    State(s): State<Service>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok((StatusCode::CREATED, Json(s.create(req)?)))
}

async fn list_sessions(State(s): State<Service>) -> Json<Vec<SessionInfo>> {
    Json(s.list())
}

async fn get_session(State(s): State<Service>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(s.get(&id)?.info()))
}

async fn delete_session(State(s): State<Service>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    s.get(&id)?;
    Ok(Json(s.close(&id)?))
}

async fn get_decisions(State(s): State<Service>, Path(id): Path<String>) -> Result<Json<Vec<DecisionRecord>>, ApiError> {
    Ok(Json(s.get(&id)?.core.lock().unwrap().decisions().to_vec()))
}

#[derive(Deserialize)]
struct ExportQuery {
    annotator: String,
}

async fn get_export(
    State(s): State<Service>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let h = s.get(&id)?;
    let core = h.core.lock().unwrap();
    if core.mode != Mode::AnnotateReplay {
        return Err(ApiError::new(StatusCode::CONFLICT, "wrong_mode", "exports exist only for ANNOTATE_REPLAY sessions"));
    }
    let export = export_annotations(&core.trial_id, core.decisions(), &q.annotator, core.ticks())
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, "empty_log", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], export.to_csv()).into_response())
}

async fn get_agreement(State(s): State<Service>, Path(id): Path<String>) -> Result<Json<AgreementReport>, ApiError> {
    let h = s.get(&id)?;
    let core = h.core.lock().unwrap();
    let exports: Vec<AnnotationExport> = annotators(core.decisions())
        .iter()
        .map(|a| export_annotations(&core.trial_id, core.decisions(), a, core.ticks()))
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, "export", e.to_string()))?;
    let report = agreement_report(&exports).map_err(|e| ApiError::new(StatusCode::CONFLICT, "agreement", e.to_string()))?;
    Ok(Json(report))
}

async fn get_trial_log(State(s): State<Service>, Path(id): Path<String>) -> Result<Json<TrialLog>, ApiError> {
    let h = s.get(&id)?;
    let core = h.core.lock().unwrap();
    core.trial_log()
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "not_finished", "the trial log exists once the simulation ends"))
}

async fn ws_upgrade(
    State(s): State<Service>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = s.get(&id)?;
    Ok(ws.on_upgrade(move |socket| client(socket, handle)))
}

fn reply(handle: &SessionHandle, text: &str) -> Envelope {
    let mut core = handle.core.lock().unwrap();
    let id = core.id.clone();
    let clock = core.clock();
    let error = |e: ErrorPayload| Envelope::new(&id, clock, Body::Error(e));
    let env = match Envelope::parse(text) {
        Ok(env) => env,
        Err(e) => return error(e),
    };
    if env.session != id {
        return error(ErrorPayload { code: ErrorCode::WrongSession, message: format!("this channel is session `{id}`") });
    }
    let received = handle.created.elapsed().as_secs_f64();
    match core.command(env.t_scene, &env.body, received) {
        Ok(ack) => Envelope::new(&id, env.t_scene, Body::Ack(ack)),
        Err(e) => error(e),
    }
}

async fn client(mut socket: WebSocket, handle: Arc<SessionHandle>) {
    handle.clients.fetch_add(1, Ordering::SeqCst);
    let (mut feed, greeting) = {
        let core = handle.core.lock().unwrap();
        let info = core.info(handle.clients.load(Ordering::SeqCst));
        let mut greeting = vec![Envelope::new(&core.id, core.clock(), Body::Welcome(info))];
        if let Some(s) = core.latest() {
            greeting.push(Envelope::new(&core.id, s.t_scene, Body::Snapshot(s.clone())));
        }
        if core.is_finished() {
            greeting.push(Envelope::new(&core.id, core.clock(), Body::Ended(Ended { reason: EndReason::StreamEnd, mode: core.mode })));
        }
        (handle.feed.subscribe(), greeting)
    };
    let mut open = true;
    for env in greeting {
        if socket.send(Message::Text(env.to_text().into())).await.is_err() {
            open = false;
            break;
        }
    }
    while open {
        tokio::select! {
            msg = feed.recv() => match msg {
                Ok(text) => open = socket.send(Message::Text(text.as_ref().into())).await.is_ok(),
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client lagged by {n} messages"),
                Err(broadcast::error::RecvError::Closed) => open = false,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let env = reply(&handle, text.as_str());
                    open = socket.send(Message::Text(env.to_text().into())).await.is_ok();
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => open = false,
                Some(Ok(_)) => {}
            },
        }
    }
    handle.clients.fetch_sub(1, Ordering::SeqCst);
}
