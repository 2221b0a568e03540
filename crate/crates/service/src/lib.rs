//! HTTP JSON service holding Multimapper sessions.
//!
//! Every session has one committed snapshot that readers share, and at most
//! one mutation in flight; a second concurrent mutation gets `409`. Sessions
//! are written to the data directory on every commit and loaded back on
//! first access after a restart.

mod error;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use multimapper_core::api::{
    CreateSessionRequest, CreateSessionResponse, DiagnoseRequest, DiagnoseResponse, MagnifyResponse, SessionSnapshot,
};
use multimapper_core::diagnostics::{diagnose, suggest_action, Method};
use multimapper_core::geometry::PointCloud;
use multimapper_core::multimapper::{AnalysisState, MagnifyRequest};
use multimapper_core::session::{canonical_json, DatasetSource, LensSpec, Session};

pub use error::ApiError;
pub use store::Store;

pub const MAX_BODY_BYTES: usize = 50 * 1024 * 1024;
pub const DEFAULT_IDLE_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Sessions untouched for this long are deleted.
    pub idle_ttl: Duration,
    pub sweep_interval: Duration,
    /// Static UI assets served under `/ui`, if built.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            idle_ttl: DEFAULT_IDLE_TTL,
            sweep_interval: Duration::from_secs(600),
            ui_dir: None,
        }
    }
}

struct Committed {
    session: Session,
    snapshot: SessionSnapshot,
}

struct Slot {
    committed: RwLock<Arc<Committed>>,
    pending: AtomicBool,
    last_access: AtomicU64,
}

impl Slot {
    fn new(committed: Committed) -> Arc<Slot> {
        Arc::new(Slot {
            committed: RwLock::new(Arc::new(committed)),
            pending: AtomicBool::new(false),
            last_access: AtomicU64::new(now_secs()),
        })
    }

    fn current(&self) -> Arc<Committed> {
        self.last_access.store(now_secs(), Ordering::Relaxed);
        self.committed.read().expect("snapshot lock poisoned").clone()
    }

    fn begin(self: &Arc<Self>) -> Result<PendingGuard, ApiError> {
        self.pending
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ApiError::Conflict("another mutation is in flight for this session".into()))?;
        Ok(PendingGuard(self.clone()))
    }

    fn commit(&self, next: Committed) {
        *self.committed.write().expect("snapshot lock poisoned") = Arc::new(next);
    }
}

struct PendingGuard(Arc<Slot>);

impl Drop for PendingGuard {
    fn drop(&mut self) {
        self.0.pending.store(false, Ordering::Release);
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Store,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> multimapper_core::Result<Self> {
        Ok(AppState {
            store: Store::open(&config.data_dir)?,
            sessions: Arc::default(),
            config: Arc::new(config),
        })
    }

    async fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.sessions.read().expect("session map poisoned").get(id) {
            return Ok(slot.clone());
        }
        if !store::valid_id(id) {
            return Err(not_found(id));
        }
        let store = self.store.clone();
        let key = id.to_string();
        let loaded = blocking(move || store.load_session(&key).map_err(ApiError::from)).await?;
        let (snapshot, session) = loaded.ok_or_else(|| not_found(id))?;
        let mut map = self.sessions.write().expect("session map poisoned");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Slot::new(Committed { session, snapshot }))
            .clone())
    }

    /// Drops sessions idle for longer than the configured TTL, in memory and on disk.
    pub fn sweep(&self) {
        let ttl = self.config.idle_ttl;
        let cutoff = now_secs().saturating_sub(ttl.as_secs());
        let expired: Vec<String> = {
            let mut map = self.sessions.write().expect("session map poisoned");
            let ids: Vec<String> = map
                .iter()
                .filter(|(_, s)| s.last_access.load(Ordering::Relaxed) < cutoff && !s.pending.load(Ordering::Acquire))
                .map(|(id, _)| id.clone())
                .collect();
            for id in &ids {
                map.remove(id);
            }
            ids
        };
        let live: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        let stale = self
            .store
            .sessions_older_than(SystemTime::now() - ttl)
            .into_iter()
            .filter(|id| !live.contains(id));
        for id in expired.into_iter().chain(stale) {
            if let Err(e) = self.store.remove_session(&id) {
                tracing::warn!(session = %id, error = %e, "could not remove expired session");
            } else {
                tracing::info!(session = %id, "expired idle session");
            }
        }
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn not_found(id: &str) -> ApiError {
    ApiError::NotFound(format!("no session {id:?}"))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Result<Response, ApiError> {
    let body = canonical_json(value).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((status, [(header::CONTENT_TYPE, "application/json")], body).into_response())
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/magnify", post(magnify))
        .route("/sessions/{id}/coarsen", post(magnify))
        .route("/sessions/{id}/diagnose", post(diagnose_session));
    if let Some(dir) = &state.config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the listener fails, sweeping idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config).map_err(std::io::Error::other)?;
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweeper.config.sweep_interval);
        loop {
            tick.tick().await;
            let s = sweeper.clone();
            let _ = tokio::task::spawn_blocking(move || s.sweep()).await;
        }
    });
    axum::serve(listener, router(state)).await
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse(&body)?;
    let store = app.store.clone();
    let (session, snapshot) = blocking(move || {
        let (points, source) = match (&req.points_csv, &req.fixture) {
            (Some(csv), None) => (PointCloud::from_csv_str(csv)?, DatasetSource::Stored),
            (None, Some(f)) => {
                let source = DatasetSource::Fixture {
                    name: f.name.clone(),
                    seed: f.seed,
                    n: f.n,
                };
                (source.load()?, source)
            }
            _ => return Err(ApiError::BadRequest("give exactly one of points_csv and fixture".into())),
        };
        if let LensSpec::Csv(_) = req.lens {
            return Err(ApiError::BadRequest("the service computes lenses itself; use coord:… or pca:d".into()));
        }
        let lens = req.lens.compute(&points)?;
        let state = AnalysisState::new(
            Arc::new(points),
            Arc::new(lens),
            req.cover,
            req.cluster,
            req.dim_cap,
        )?;
        if source == DatasetSource::Stored {
            store.save_dataset(&state.points)?;
        }
        let session = Session {
            state,
            source,
            lens: req.lens,
            diagnostics: None,
        };
        let now = now_secs();
        let snapshot = SessionSnapshot {
            session_id: uuid::Uuid::new_v4().to_string(),
            created_at: now,
            updated_at: now,
            session: session.to_file(),
        };
        store.save_session(&snapshot)?;
        Ok((session, snapshot))
    })
    .await?;
    let id = snapshot.session_id.clone();
    let response = CreateSessionResponse {
        session_id: id.clone(),
        complex: session.state.complex.clone(),
        report: session.state.report.clone(),
    };
    tracing::info!(session = %id, nodes = session.state.complex.nodes.len(), "created session");
    app.sessions
        .write()
        .expect("session map poisoned")
        .insert(id, Slot::new(Committed { session, snapshot }));
    json(StatusCode::CREATED, &response)
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id).await?;
    json(StatusCode::OK, &slot.current().snapshot)
}

async fn magnify(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: MagnifyRequest = parse(&body)?;
    let slot = app.slot(&id).await?;
    let guard = slot.begin()?;
    let current = slot.current();
    let store = app.store.clone();
    let (next, response) = blocking(move || {
        let old = &current.session;
        let degeneracy_points = old.state.degeneracy_guard(&req)?;
        let state = old.state.magnify(&req)?;
        let mut session = old.clone();
        session.advance(state);
        let snapshot = SessionSnapshot {
            updated_at: now_secs(),
            session: session.to_file(),
            ..current.snapshot.clone()
        };
        store.save_session(&snapshot)?;
        let response = MagnifyResponse {
            complex: session.state.complex.clone(),
            degeneracy_points,
            node_delta: session.state.complex.nodes.len() as i64 - old.state.complex.nodes.len() as i64,
            report: session.state.report.clone(),
        };
        Ok((Committed { session, snapshot }, response))
    })
    .await?;
    slot.commit(next);
    drop(guard);
    tracing::info!(session = %id, node_delta = response.node_delta, "magnified");
    json(StatusCode::OK, &response)
}

async fn diagnose_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: DiagnoseRequest = parse(&body)?;
    let method: Method = req.method.parse().map_err(|e: multimapper_core::Error| ApiError::BadRequest(e.to_string()))?;
    let slot = app.slot(&id).await?;
    let guard = slot.begin()?;
    let current = slot.current();
    let store = app.store.clone();
    let (next, response) = blocking(move || {
        let old = &current.session;
        let report = diagnose(&old.state, method, &req.tower_config(), req.cluster.as_ref(), req.max_dim())?;
        let suggestions = report
            .violations
            .iter()
            .map(|v| suggest_action(v, &old.state))
            .collect::<multimapper_core::Result<Vec<_>>>()?;
        let mut session = old.clone();
        session.record_diagnostics(report.clone());
        let snapshot = SessionSnapshot {
            updated_at: now_secs(),
            session: session.to_file(),
            ..current.snapshot.clone()
        };
        store.save_session(&snapshot)?;
        Ok((Committed { session, snapshot }, DiagnoseResponse { report, suggestions }))
    })
    .await?;
    slot.commit(next);
    drop(guard);
    json(StatusCode::OK, &response)
}
