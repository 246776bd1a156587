//! HTTP API under `/v1`.
//!
//! Privacy rules, enforced here rather than left to deployment:
//! handlers never read request headers, no response sets a cookie, and the
//! access log stores method, path and status only (the query string is
//! dropped before anything is written) and is pruned to the retention window.

mod access_log;
mod params;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;
use tower_http::cors::CorsLayer;

use claimsearch::index::{SearchContext, SearchIndex, SharedIndex};
use claimsearch::pipeline::{Config, PipelineExecutor, Resources};
use claimsearch::stats::compute_stats;
use claimsearch::workflow::{execute_dag, DagRun, RunEvent, RunObserver, TaskExecutor, TaskSpec};

pub use access_log::{scrub_access_log, AccessLog, AccessRecord};
pub use params::{parse_search_params, SearchParams};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unavailable(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// The DAG the `/pipeline/run` endpoint executes.
#[derive(Clone)]
pub struct PipelineHandle {
    pub tasks: Vec<TaskSpec>,
    pub workers: usize,
    pub executor: Arc<dyn TaskExecutor>,
    /// Optional JSONL run log shared across runs.
    pub run_log: Option<Arc<dyn RunObserver + Send>>,
}

#[derive(Default)]
struct Runs {
    active: Option<String>,
    all: BTreeMap<String, DagRun>,
}

#[derive(Clone)]
pub struct AppState {
    index: SharedIndex,
    available: Arc<AtomicBool>,
    ctx: SearchContext,
    default_page_size: usize,
    pipeline: Option<PipelineHandle>,
    runs: Arc<Mutex<Runs>>,
    access_log: Option<Arc<AccessLog>>,
}

impl AppState {
    /// An API over `index`, which is reported available from the start.
    pub fn new(index: SharedIndex, ctx: SearchContext, default_page_size: usize) -> Self {
        Self {
            index,
            available: Arc::new(AtomicBool::new(true)),
            ctx,
            default_page_size,
            pipeline: None,
            runs: Arc::default(),
            access_log: None,
        }
    }

    pub fn with_pipeline(mut self, pipeline: PipelineHandle) -> Self {
        self.pipeline = Some(pipeline);
        self
    }

    pub fn with_access_log(mut self, log: Arc<AccessLog>) -> Self {
        self.access_log = Some(log);
        self
    }

    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn index(&self) -> &SharedIndex {
        &self.index
    }

    /// Loads resources and the snapshot named by `config`. Without a snapshot
    /// the index stays unavailable until a pipeline run builds one.
    pub fn from_config(config: &Config) -> Result<Self, String> {
        let resources = Resources::load(config).map_err(|e| e.to_string())?;
        let snapshot = config.paths.snapshot();
        let (index, available) = if snapshot.exists() {
            let index = SearchIndex::load(&snapshot).map_err(|e| format!("{}: {e}", snapshot.display()))?;
            (index, true)
        } else {
            (SearchIndex::with_settings(config.index.settings()), false)
        };
        let shared = SharedIndex::new(index);
        let run_log = claimsearch::workflow::JsonlRunLog::open(&config.paths.run_log())
            .map_err(|e| format!("{}: {e}", config.paths.run_log().display()))?;
        let executor = PipelineExecutor {
            config: config.clone(),
            resources: resources.clone(),
            live: Some(shared.clone()),
        };
        let mut state = Self::new(shared, resources.search_context(), config.server.page_size).with_pipeline(
            PipelineHandle {
                tasks: config.pipeline.tasks.clone(),
                workers: config.pipeline.workers,
                executor: Arc::new(executor),
                run_log: Some(Arc::new(run_log)),
            },
        );
        state.set_available(available);
        if let Some(path) = &config.server.access_log {
            let retention = Duration::from_secs(config.server.log_retention_hours * 3600);
            let log = AccessLog::open(path, retention).map_err(|e| format!("{}: {e}", path.display()))?;
            state = state.with_access_log(Arc::new(log));
        }
        Ok(state)
    }

    fn require_index(&self) -> Result<(), ApiError> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(ApiError::Unavailable("index not loaded".into()))
        }
    }
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let api = Router::new()
        .route("/search", get(search))
        .route("/claims/{record_id}", get(claim))
        .route("/stats", get(stats))
        .route("/health", get(health))
        .route("/pipeline/run", post(start_run))
        .route("/pipeline/runs/{run_id}", get(run_status));
    let mut app = Router::new().nest("/v1", api);
    let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
    if !origins.is_empty() {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods([Method::GET, Method::POST]),
        );
    }
    if let Some(log) = state.access_log.clone() {
        app = app.layer(middleware::from_fn_with_state(log, access_log::record));
    }
    app.with_state(state)
}

async fn search(
    State(state): State<AppState>,
    UrlQuery(params): UrlQuery<SearchParams>,
) -> Result<impl IntoResponse, ApiError> {
    let query = parse_search_params(&params, state.default_page_size).map_err(ApiError::BadRequest)?;
    state.require_index()?;
    let page = state
        .index
        .search(&query, &state.ctx)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(Json(page))
}

async fn claim(State(state): State<AppState>, Path(record_id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    state.require_index()?;
    let index = state.index.read();
    let doc = index
        .get(&record_id)
        .ok_or_else(|| ApiError::NotFound(format!("no claim {record_id}")))?;
    Ok(Json(doc.enriched.clone()))
}

async fn stats(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    state.require_index()?;
    let report = compute_stats(&state.index.read());
    Ok(Json(report))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    index_available: bool,
    documents: usize,
    snapshot_at: Option<chrono::DateTime<chrono::Utc>>,
    active_run: Option<String>,
}

async fn health(State(state): State<AppState>) -> impl IntoResponse {
    let (documents, snapshot_at) = {
        let index = state.index.read();
        (index.len(), index.snapshot_at())
    };
    let active_run = state.runs.lock().expect("runs poisoned").active.clone();
    Json(Health {
        status: "ok",
        index_available: state.available.load(Ordering::SeqCst),
        documents,
        snapshot_at,
        active_run,
    })
}

struct RunTracker {
    runs: Arc<Mutex<Runs>>,
    log: Option<Arc<dyn RunObserver + Send>>,
}

impl RunObserver for RunTracker {
    fn on_event(&self, run: &DagRun, event: &RunEvent) {
        self.runs
            .lock()
            .expect("runs poisoned")
            .all
            .insert(run.run_id.clone(), run.clone());
        if let Some(log) = &self.log {
            log.on_event(run, event);
        }
    }
}

async fn start_run(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let pipeline = state
        .pipeline
        .clone()
        .ok_or_else(|| ApiError::Unavailable("no pipeline configured".into()))?;
    let run_id = claimsearch::workflow::new_run_id();
    {
        let mut runs = state.runs.lock().expect("runs poisoned");
        if let Some(active) = &runs.active {
            return Err(ApiError::Conflict(format!("run {active} is still active")));
        }
        runs.active = Some(run_id.clone());
    }
    let tracker = RunTracker {
        runs: state.runs.clone(),
        log: pipeline.run_log.clone(),
    };
    let available = state.available.clone();
    let id = run_id.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = execute_dag(&pipeline.tasks, pipeline.executor.as_ref(), &id, pipeline.workers, &tracker);
        let run = match outcome {
            Ok(run) => Some(run),
            Err(claimsearch::workflow::ExecuteError::ExecutorUnavailable { run, .. }) => Some(*run),
            Err(_) => None,
        };
        if let Some(run) = &run {
            if run.succeeded() {
                available.store(true, Ordering::SeqCst);
            }
        }
        let mut runs = tracker.runs.lock().expect("runs poisoned");
        if let Some(run) = run {
            runs.all.insert(id.clone(), run);
        }
        runs.active = None;
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))))
}

async fn run_status(State(state): State<AppState>, Path(run_id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let runs = state.runs.lock().expect("runs poisoned");
    match runs.all.get(&run_id) {
        Some(run) => Ok(Json(run.clone()).into_response()),
        // Accepted but no transition recorded yet.
        None if runs.active.as_deref() == Some(run_id.as_str()) => {
            Ok((StatusCode::OK, Json(json!({ "run_id": run_id, "task_states": {}, "finished_at": null }))).into_response())
        }
        None => Err(ApiError::NotFound(format!("no run {run_id}"))),
    }
}

/// Binds `config.server.bind` and serves until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), String> {
    let state = AppState::from_config(&config)?;
    let addr: SocketAddr = config.server.bind.parse().map_err(|e| format!("bad bind address: {e}"))?;
    if let Some(log) = state.access_log.clone() {
        tokio::spawn(async move {
            let period = log.retention().min(Duration::from_secs(3600));
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let log = log.clone();
                let _ = tokio::task::spawn_blocking(move || log.scrub(chrono::Utc::now())).await;
            }
        });
    }
    let app = router(state, &config.server.cors_origins);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("binding {addr}: {e}"))?;
    eprintln!("listening on http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
