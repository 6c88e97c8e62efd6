//! Session-stateful HTTP JSON API over the dosestrat engine.
//!
//! Each session owns a [`Workbench`]. Reads render views from a snapshot of the
//! session's workbench; mutations build the next revision and swap it in. Every
//! response to a session route carries the revision it was computed at in the
//! `x-session-revision` header.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dosestrat_core::clustering::ClusterParams;
use dosestrat_core::cohort::{generate_synthetic_cohort, layout, load_cohort, Cohort, CohortFormat, LoadOptions, SyntheticConfig};
use dosestrat_core::features::FeatureSpec;
use dosestrat_core::pipeline::{json_text, Analysis, Body, Format, OutcomeSelection, RulesRequest, View, Workbench};
use dosestrat_core::search::Metric;
use dosestrat_core::{write_atomic, Error as CoreError, ErrorKind};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

pub const REVISION_HEADER: &str = "x-session-revision";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Adds permissive cross-origin headers for a UI served from another origin.
    pub dev_cors: bool,
    /// Ceiling on a single computation.
    pub request_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            dev_cors: true,
            request_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} has a mutation in flight")]
    Busy(String),
    #[error("request body: {0}")]
    Body(String),
    #[error("computation exceeded {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: String,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, field) = match &self {
            ApiError::UnknownSession(_) => (StatusCode::NOT_FOUND, "not_found", None),
            ApiError::Busy(_) => (StatusCode::CONFLICT, "conflict", None),
            ApiError::Body(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation", Some("body".to_string())),
            ApiError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "timeout", None),
            ApiError::Core(CoreError::Unknown { what: "patient", .. }) => {
                (StatusCode::NOT_FOUND, "not_found", Some("patient".to_string()))
            }
            ApiError::Core(e) => match e.kind() {
                ErrorKind::Validation | ErrorKind::Io => (StatusCode::UNPROCESSABLE_ENTITY, "validation", e.field()),
                ErrorKind::Engine => (StatusCode::INTERNAL_SERVER_ERROR, "engine", e.field()),
            },
        };
        let body = ErrorBody {
            error: self.to_string(),
            kind,
            field,
        };
        let text = json_text(&body).unwrap_or_else(|_| format!("{{\"error\":{:?}}}\n", self.to_string()));
        (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// One client's analysis state.
pub struct Session {
    current: RwLock<Arc<Workbench>>,
    mutating: AtomicBool,
}

/// Held while a mutation is in flight; a second mutation gets 409.
pub struct MutationGuard<'a>(&'a AtomicBool);

impl Drop for MutationGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Session {
    fn new(workbench: Workbench) -> Session {
        Session {
            current: RwLock::new(Arc::new(workbench)),
            mutating: AtomicBool::new(false),
        }
    }

    pub fn snapshot(&self) -> Arc<Workbench> {
        Arc::clone(&self.current.read().expect("session lock"))
    }

    /// Claims the session for a mutation, or `None` if one is already running.
    pub fn begin_mutation(&self) -> Option<MutationGuard<'_>> {
        self.mutating
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| MutationGuard(&self.mutating))
    }

    fn replace(&self, _guard: &MutationGuard<'_>, next: Workbench) -> Arc<Workbench> {
        let next = Arc::new(next);
        *self.current.write().expect("session lock") = Arc::clone(&next);
        next
    }
}

/// All sessions plus the cohort new sessions use when none is given.
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    default_cohort: Option<Arc<Cohort>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(default_cohort: Option<Cohort>, config: ServiceConfig) -> Arc<AppState> {
        Arc::new(AppState {
            sessions: RwLock::new(HashMap::new()),
            default_cohort: default_cohort.map(Arc::new),
            config,
        })
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn insert(&self, workbench: Workbench) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(Session::new(workbench)));
        tracing::info!(session = %id, "session created");
        id
    }
}

/// Where a new session's cohort comes from.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CohortSource {
    /// The server's default cohort.
    #[default]
    Default,
    Path {
        path: PathBuf,
        #[serde(default)]
        allow_missing: bool,
    },
    /// A cohort document in the JSON cohort format.
    Inline {
        cohort: serde_json::Value,
        #[serde(default)]
        allow_missing: bool,
    },
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
        #[serde(default)]
        seed: u64,
    },
}

impl CohortSource {
    fn load(&self, state: &AppState) -> ApiResult<Arc<Cohort>> {
        Ok(match self {
            CohortSource::Default => state.default_cohort.clone().ok_or_else(|| {
                CoreError::Invalid {
                    field: "cohort".into(),
                    message: "no cohort given and the server has no default cohort".into(),
                }
            })?,
            CohortSource::Path { path, allow_missing } => Arc::new(load_cohort(
                path,
                CohortFormat::from_path(path)?,
                &LoadOptions {
                    allow_missing: *allow_missing,
                },
            )?),
            CohortSource::Inline { cohort, allow_missing } => Arc::new(Cohort::from_json_str(
                &cohort.to_string(),
                &LoadOptions {
                    allow_missing: *allow_missing,
                },
            )?),
            CohortSource::Synthetic { config, seed } => Arc::new(generate_synthetic_cohort(config, *seed)?.cohort),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub cohort: CohortSource,
    /// Starting analysis; defaults to every organ with default parameters.
    pub analysis: Option<Analysis>,
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    pub session: String,
    pub revision: u64,
    pub patients: usize,
    pub organs: Vec<String>,
    pub symptoms: Vec<String>,
    pub time_points: Vec<String>,
    pub confounders: Vec<String>,
    pub analysis: Analysis,
}

impl SessionInfo {
    fn of(id: &str, wb: &Workbench) -> SessionInfo {
        let c = wb.cohort();
        SessionInfo {
            session: id.to_string(),
            revision: wb.revision(),
            patients: c.len(),
            organs: c.organs().iter().map(|o| o.name().to_string()).collect(),
            symptoms: c.symptoms().to_vec(),
            time_points: c.time_points().to_vec(),
            confounders: c.confounders().to_vec(),
            analysis: wb.analysis().clone(),
        }
    }
}

/// A saved session: the cohort document plus the analysis state.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub cohort: serde_json::Value,
    #[serde(default)]
    pub allow_missing: bool,
    pub analysis: Analysis,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRequest {
    path: PathBuf,
}

fn parse_body<T: serde::de::DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let text = if bytes.iter().all(u8::is_ascii_whitespace) {
        &b"{}"[..]
    } else {
        &bytes[..]
    };
    serde_json::from_slice(text).map_err(|e| ApiError::Body(e.to_string()))
}

fn revision_header(revision: u64) -> [(HeaderName, HeaderValue); 1] {
    [(HeaderName::from_static(REVISION_HEADER), HeaderValue::from(revision))]
}

fn respond(status: StatusCode, revision: u64, body: &Body) -> Response {
    (
        status,
        revision_header(revision),
        [(header::CONTENT_TYPE, body.content_type)],
        body.text.clone(),
    )
        .into_response()
}

fn respond_json<T: Serialize>(status: StatusCode, revision: u64, value: &T) -> ApiResult<Response> {
    Ok(respond(status, revision, &Body::json(value)?))
}

/// Runs blocking engine work off the async runtime, under the request ceiling.
async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let limit = state.config.request_timeout;
    match tokio::time::timeout(limit, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(result)) => result,
        Ok(Err(join)) => Err(ApiError::Core(CoreError::Invalid {
            field: "internal".into(),
            message: join.to_string(),
        })),
        Err(_) => Err(ApiError::Timeout(limit)),
    }
}

async fn create_session(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&bytes)?;
    let st = Arc::clone(&state);
    let wb = blocking(&state, move || {
        let cohort = req.cohort.load(&st)?;
        let analysis = req.analysis.unwrap_or_else(|| Analysis::default_for(&cohort));
        Ok(Workbench::new(cohort, analysis)?)
    })
    .await?;
    let info = SessionInfo::of("", &wb);
    let id = state.insert(wb);
    respond_json(StatusCode::CREATED, info.revision, &SessionInfo { session: id, ..info })
}

async fn load_session(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<Response> {
    let req: PathRequest = parse_body(&bytes)?;
    let wb = blocking(&state, move || {
        let text = std::fs::read_to_string(&req.path).map_err(|e| CoreError::Io {
            path: req.path.display().to_string(),
            source: e,
        })?;
        let file: SessionFile = serde_json::from_str(&text).map_err(CoreError::from)?;
        let cohort = Cohort::from_json_str(
            &file.cohort.to_string(),
            &LoadOptions {
                allow_missing: file.allow_missing,
            },
        )?;
        Ok(Workbench::new(Arc::new(cohort), file.analysis)?)
    })
    .await?;
    let info = SessionInfo::of("", &wb);
    let id = state.insert(wb);
    respond_json(StatusCode::CREATED, info.revision, &SessionInfo { session: id, ..info })
}

async fn session_info(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let wb = state.session(&id)?.snapshot();
    respond_json(StatusCode::OK, wb.revision(), &SessionInfo::of(&id, &wb))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    state
        .sessions
        .write()
        .expect("sessions lock")
        .remove(&id)
        .ok_or(ApiError::UnknownSession(id))?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

fn session_file(wb: &Workbench) -> ApiResult<SessionFile> {
    let cohort: serde_json::Value = serde_json::from_str(&wb.cohort().to_json_string()?).map_err(CoreError::from)?;
    Ok(SessionFile {
        cohort,
        allow_missing: wb.cohort().patients().iter().any(|p| p.dvh.iter().any(Option::is_none)),
        analysis: wb.analysis().clone(),
    })
}

async fn export_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let wb = state.session(&id)?.snapshot();
    let revision = wb.revision();
    let file = blocking(&state, move || session_file(&wb)).await?;
    respond_json(StatusCode::OK, revision, &file)
}

async fn save_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let req: PathRequest = parse_body(&bytes)?;
    let wb = state.session(&id)?.snapshot();
    let revision = wb.revision();
    let path = req.path.clone();
    blocking(&state, move || {
        let text = json_text(&session_file(&wb)?)?;
        Ok(write_atomic(&path, text.as_bytes())?)
    })
    .await?;
    respond_json(StatusCode::OK, revision, &serde_json::json!({ "saved": req.path }))
}

/// Which analysis field a PUT replaces.
#[derive(Clone, Copy)]
enum Part {
    Spec,
    Params,
    Outcome,
}

fn part_value(analysis: &Analysis, part: Part) -> ApiResult<Body> {
    Ok(match part {
        Part::Spec => Body::json(&analysis.spec)?,
        Part::Params => Body::json(&analysis.params)?,
        Part::Outcome => Body::json(&analysis.outcome)?,
    })
}

async fn get_part(state: Arc<AppState>, id: String, part: Part) -> ApiResult<Response> {
    let wb = state.session(&id)?.snapshot();
    Ok(respond(StatusCode::OK, wb.revision(), &part_value(wb.analysis(), part)?))
}

async fn put_part(state: Arc<AppState>, id: String, part: Part, bytes: Bytes) -> ApiResult<Response> {
    let session = state.session(&id)?;
    let guard = session.begin_mutation().ok_or_else(|| ApiError::Busy(id.clone()))?;
    let current = session.snapshot();
    let mut analysis = current.analysis().clone();
    match part {
        Part::Spec => analysis.spec = parse_body::<FeatureSpec>(&bytes)?,
        Part::Params => analysis.params = parse_body::<ClusterParams>(&bytes)?,
        Part::Outcome => analysis.outcome = parse_body::<OutcomeSelection>(&bytes)?,
    }
    let next = current.revise(analysis)?;
    let next = session.replace(&guard, next);
    drop(guard);
    Ok(respond(StatusCode::OK, next.revision(), &part_value(next.analysis(), part)?))
}

macro_rules! part_routes {
    ($get:ident, $put:ident, $part:expr) => {
        async fn $get(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
            get_part(state, id, $part).await
        }
        async fn $put(
            State(state): State<Arc<AppState>>,
            Path(id): Path<String>,
            bytes: Bytes,
        ) -> ApiResult<Response> {
            put_part(state, id, $part, bytes).await
        }
    };
}

part_routes!(get_spec, put_spec, Part::Spec);
part_routes!(get_params, put_params, Part::Params);
part_routes!(get_outcome, put_outcome, Part::Outcome);

async fn render_view(state: &Arc<AppState>, id: &str, view: View) -> ApiResult<Response> {
    let wb = state.session(id)?.snapshot();
    let revision = wb.revision();
    let body = blocking(state, move || Ok(wb.render(&view)?)).await?;
    Ok(respond(StatusCode::OK, revision, &body))
}

type Params = Query<HashMap<String, String>>;

fn query_format(q: &HashMap<String, String>) -> ApiResult<Format> {
    Ok(q.get("format").map(|f| f.parse()).transpose()?.unwrap_or_default())
}

fn check_query(q: &HashMap<String, String>, allowed: &[&str]) -> ApiResult<()> {
    match q.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(CoreError::Invalid {
            field: k.clone(),
            message: "unknown query parameter".into(),
        }
        .into()),
        None => Ok(()),
    }
}

async fn model(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    render_view(&state, &id, View::Model).await
}

async fn clusters(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    render_view(&state, &id, View::Clusters).await
}

/// Parses `3,4,5` into thresholds.
pub fn parse_thresholds(text: &str) -> Result<Vec<u8>, CoreError> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<u8>().map_err(|_| CoreError::Invalid {
                field: "thresholds".into(),
                message: format!("{t:?} is not a rating threshold"),
            })
        })
        .collect()
}

async fn lrt(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> ApiResult<Response> {
    check_query(&q, &["thresholds", "format"])?;
    let thresholds = q.get("thresholds").map(|t| parse_thresholds(t)).transpose()?;
    let format = query_format(&q)?;
    render_view(&state, &id, View::Lrt { thresholds, format }).await
}

async fn outcome_grid(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    check_query(&q, &["date_bins"])?;
    let date_bins = q
        .get("date_bins")
        .map(|b| {
            b.parse::<usize>().map_err(|_| CoreError::Invalid {
                field: "date_bins".into(),
                message: format!("{b:?} is not a count"),
            })
        })
        .transpose()?;
    render_view(&state, &id, View::OutcomeGrid { date_bins }).await
}

async fn additive_effects(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> ApiResult<Response> {
    check_query(&q, &["metric", "format"])?;
    let metric: Metric = q.get("metric").map(|m| m.parse()).transpose()?.unwrap_or_default();
    let format = query_format(&q)?;
    render_view(&state, &id, View::AdditiveEffects { metric, format }).await
}

async fn scatter(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> ApiResult<Response> {
    check_query(&q, &["x", "y"])?;
    let x = q.get("x").map_or("dose_pc1", String::as_str).parse()?;
    let y = q.get("y").map_or("dose_pc2", String::as_str).parse()?;
    render_view(&state, &id, View::Scatter { x, y }).await
}

async fn patient(State(state): State<Arc<AppState>>, Path((id, pid)): Path<(String, String)>) -> ApiResult<Response> {
    render_view(&state, &id, View::Patient(pid)).await
}

async fn rules(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: RulesRequest = parse_body(&bytes)?;
    render_view(&state, &id, View::Rules(req)).await
}

async fn organ_layout() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], layout::organ_layout_json()).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = state.config.dev_cors.then(|| {
        CorsLayer::permissive().expose_headers([HeaderName::from_static(REVISION_HEADER)])
    });
    let router = Router::new()
        .route("/layout", get(organ_layout))
        .route("/session", post(create_session))
        .route("/session/load", post(load_session))
        .route("/session/{id}", get(session_info).delete(delete_session))
        .route("/session/{id}/export", get(export_session))
        .route("/session/{id}/save", post(save_session))
        .route("/session/{id}/spec", get(get_spec).put(put_spec))
        .route("/session/{id}/params", get(get_params).put(put_params))
        .route("/session/{id}/outcome", get(get_outcome).put(put_outcome))
        .route("/session/{id}/model", get(model))
        .route("/session/{id}/clusters", get(clusters))
        .route("/session/{id}/lrt", get(lrt))
        .route("/session/{id}/outcome_grid", get(outcome_grid))
        .route("/session/{id}/additive_effects", get(additive_effects))
        .route("/session/{id}/scatter", get(scatter))
        .route("/session/{id}/patient/{pid}", get(patient))
        .route("/session/{id}/rules", post(rules))
        .with_state(state);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
