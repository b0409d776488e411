//! HTTP/JSON service: a registry of in-memory sessions, each behind its own
//! reader-writer lock.
//!
//! Error bodies are `{code, message, detail?}`. Unknown entities named in
//! the path answer 404; unknown references inside a body or query answer
//! 422 with the matching `UNKNOWN_*` code.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::Error;
use crate::model::{Dataset, LoadOptions};
use crate::query::{curve, CurveKind, CurveQuery};
use crate::sampling::{replicate_sweep, ReplicateAnalysis, SampleSpec};
use crate::select::{Slot, StepMode};
use crate::session::{FocusScope, SelectionRequest, Session, SessionDoc};
use crate::trinary::OperatingPoint;

type Shared = Arc<RwLock<Session>>;

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Shared>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(AppState::default())
    }

    /// Register a session and return its id.
    pub fn insert(&self, session: Session) -> String {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        self.sessions.write().insert(id.clone(), Arc::new(RwLock::new(session)));
        id
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::from(Error::not_found("session", id)))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: Error,
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        let status = match &error {
            Error::Parse { .. } | Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            Error::NotFound { .. } => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Validation(_)
            | Error::Reference { .. }
            | Error::UnsupportedPolicy { .. }
            | Error::Undefined(_)
            | Error::NotNumeric(_)
            | Error::EmptyScope
            | Error::EmptyPartition(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError { status, error }
    }
}

impl ApiError {
    /// The entity was named in the request path, so absence is a 404.
    fn in_path(mut self) -> Self {
        if matches!(self.error, Error::Reference { .. }) {
            self.status = StatusCode::NOT_FOUND;
        }
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"code": self.error.code(), "message": self.error.to_string()});
        match &self.error {
            Error::Validation(report) => body["detail"] = json!(report),
            Error::Parse { line, field, .. } => body["detail"] = json!({"line": line, "field": field}),
            _ => {}
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::from(Error::Parse {
            line: e.line() as u64,
            field: None,
            message: e.to_string(),
        })
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{s}", get(session_info).delete(delete_session))
        .route("/sessions/{s}/classifiers", get(classifiers))
        .route("/sessions/{s}/classifiers/derived", post(derive))
        .route("/sessions/{s}/operating-points/{c}", put(set_point).get(get_point))
        .route("/sessions/{s}/selections", post(create_selection).get(list_selections))
        .route("/sessions/{s}/selections/{id}", get(get_selection).delete(delete_selection))
        .route("/sessions/{s}/selections/{id}/members", get(selection_members))
        .route("/sessions/{s}/selections/{id}/slot", put(assign_slot))
        .route("/sessions/{s}/curves/{kind}", get(curve_route))
        .route("/sessions/{s}/samples", post(create_sample).get(list_samples))
        .route("/sessions/{s}/replicates", post(replicates))
        .route("/sessions/{s}/focus", put(set_focus).get(get_focus))
        .route("/sessions/{s}/focus/step", post(step_focus))
        .route("/sessions/{s}/instances", get(list_instances))
        .route("/sessions/{s}/instances/{id}", get(get_instance))
        .route("/sessions/{s}/visibility", put(set_visibility))
        .route("/sessions/{s}/export", get(export))
        .with_state(state)
}

/// CORS for the given origin (`*` allows any origin).
pub fn cors(origin: &str) -> Result<CorsLayer, Error> {
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::exact(
            HeaderValue::from_str(origin).map_err(|_| Error::invalid(format!("bad CORS origin `{origin}`")))?,
        )
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any))
}

// -- sessions ---------------------------------------------------------------

type Params = Query<BTreeMap<String, String>>;

fn param<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::from(Error::invalid(format!("cannot parse `{key}` value `{v}`"))))
        })
        .transpose()
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Query(params): Params,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let classes = match params.get("classes").map(String::as_str) {
        None => None,
        Some(c) => match c.split_once(',') {
            Some((neg, pos)) => Some([neg.to_owned(), pos.to_owned()]),
            None => return Err(Error::invalid("classes must be `negative,positive`").into()),
        },
    };
    let opts = LoadOptions {
        normalize: param(&params, "normalize")?.unwrap_or(false),
        classes,
        source: params.get("source").cloned(),
    };
    let is_csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"));
    let (dataset, report) = if is_csv {
        Dataset::from_csv(&body, &opts)?
    } else {
        Dataset::from_json(&body, &opts)?
    };
    let id = state.insert(Session::new(dataset));
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(json!({"session": id, "report": report}))))
}

async fn import_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let doc: SessionDoc = parse_body(&body)?;
    let id = state.insert(Session::import(doc)?);
    Ok((StatusCode::CREATED, Json(json!({"session": id}))))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let mut ids: Vec<String> = state.sessions.read().keys().cloned().collect();
    ids.sort();
    Json(json!({"sessions": ids}))
}

async fn session_info(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.get(&s)?;
    let session = session.read();
    let d = session.dataset();
    Ok(Json(json!({
        "session": s,
        "classes": d.classes(),
        "instances": d.len(),
        "features": d.feature_names().collect::<Vec<_>>(),
        "classifiers": session.classifiers().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "provenance": d.provenance(),
        "visibility": session.visibility(),
    })))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<StatusCode> {
    match state.sessions.write().remove(&s) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(Error::not_found("session", s).into()),
    }
}

async fn export(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<SessionDoc>> {
    Ok(Json(state.get(&s)?.read().export()))
}

// -- classifiers and operating points ----------------------------------------

async fn classifiers(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<Value>> {
    let table = state.get(&s)?.read().metrics_table()?;
    Ok(Json(json!({"classifiers": table})))
}

#[derive(Deserialize)]
struct PointBody {
    classifier: Option<String>,
    lower: f64,
    upper: f64,
}

async fn set_point(
    State(state): State<Arc<AppState>>,
    Path((s, c)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: PointBody = parse_body(&body)?;
    if body.classifier.as_ref().is_some_and(|name| *name != c) {
        return Err(Error::invalid("classifier in body does not match the path").into());
    }
    let point = OperatingPoint::new(body.lower, body.upper)?;
    let session = state.get(&s)?;
    let version = session.write().set_operating_point(&c, point).map_err(|e| ApiError::from(e).in_path())?;
    Ok(Json(json!({"classifier": c, "lower": point.lower(), "upper": point.upper(), "version": version})))
}

async fn get_point(
    State(state): State<Arc<AppState>>,
    Path((s, c)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let p = state.get(&s)?.read().operating_point(&c).map_err(|e| ApiError::from(e).in_path())?;
    Ok(Json(json!({"classifier": c, "lower": p.point.lower(), "upper": p.point.upper(), "version": p.version})))
}

#[derive(Deserialize)]
struct DeriveBody {
    base: String,
    name: String,
    operating_point: Option<OperatingPoint>,
}

async fn derive(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let body: DeriveBody = parse_body(&body)?;
    let session = state.get(&s)?;
    let mut session = session.write();
    let c = session.derive(&body.base, &body.name, body.operating_point)?;
    let mut body = json!(c.kind);
    body["name"] = json!(c.name);
    Ok((StatusCode::CREATED, Json(body)))
}

// -- selections ----------------------------------------------------------------

async fn create_selection(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: SelectionRequest = parse_body(&body)?;
    let session = state.get(&s)?;
    let mut session = session.write();
    let sel = session.create_selection(req)?.clone();
    Ok((StatusCode::CREATED, Json(session.selection_doc(&sel))))
}

async fn list_selections(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.get(&s)?;
    let session = session.read();
    let docs: Vec<_> = session.selections().iter().map(|sel| session.selection_doc(sel)).collect();
    Ok(Json(json!({"selections": docs})))
}

async fn get_selection(
    State(state): State<Arc<AppState>>,
    Path((s, id)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let session = state.get(&s)?;
    let session = session.read();
    let sel = session.selection(&id).map_err(|e| ApiError::from(e).in_path())?;
    Ok(Json(json!(session.selection_doc(sel))))
}

async fn delete_selection(
    State(state): State<Arc<AppState>>,
    Path((s, id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    state.get(&s)?.write().delete_selection(&id).map_err(|e| ApiError::from(e).in_path())?;
    Ok(StatusCode::NO_CONTENT)
}

async fn selection_members(
    State(state): State<Arc<AppState>>,
    Path((s, id)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let session = state.get(&s)?;
    let session = session.read();
    let sel = session.selection(&id).map_err(|e| ApiError::from(e).in_path())?;
    let d = session.dataset();
    let members: Vec<&str> = d
        .sorted_indices()
        .iter()
        .filter(|&&i| sel.members.contains(i))
        .map(|&i| d.instance(i).id.as_str())
        .collect();
    Ok(Json(json!({"id": id, "size": members.len(), "members": members})))
}

#[derive(Deserialize)]
struct SlotBody {
    slot: Slot,
}

async fn assign_slot(
    State(state): State<Arc<AppState>>,
    Path((s, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let body: SlotBody = parse_body(&body)?;
    state.get(&s)?.write().assign_slot(&id, body.slot).map_err(|e| ApiError::from(e).in_path())?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct VisibilityBody {
    selection: Option<String>,
}

async fn set_visibility(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: VisibilityBody = parse_body(&body)?;
    state.get(&s)?.write().set_visibility(body.selection.as_deref())?;
    Ok(Json(json!({"selection": body.selection})))
}

// -- curves ----------------------------------------------------------------------

async fn curve_route(
    State(state): State<Arc<AppState>>,
    Path((s, kind)): Path<(String, String)>,
    Query(params): Params,
) -> ApiResult<Response> {
    let kind: CurveKind = kind.parse()?;
    let session = state.get(&s)?;
    let query: CurveQuery = params.into_iter().collect();
    let value = curve(&session.read(), kind, &query)?;
    let body = value.to_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

// -- samples -----------------------------------------------------------------------

async fn create_sample(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let spec: SampleSpec = parse_body(&body)?;
    let session = state.get(&s)?;
    let stored = session.write().create_sample(spec)?.clone();
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn list_samples(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({"samples": state.get(&s)?.read().samples()})))
}

#[derive(Deserialize)]
struct ReplicateBody {
    classifier: String,
    seeds: Vec<u64>,
    #[serde(flatten)]
    analysis: ReplicateAnalysis,
    selection: Option<String>,
}

async fn replicates(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: ReplicateBody = parse_body(&body)?;
    let session = state.get(&s)?;
    let session = session.read();
    let scope = session.scope(body.selection.as_deref())?;
    let c = session.classifier(&body.classifier)?;
    let summary = replicate_sweep(session.dataset(), c, &body.seeds, &body.analysis, scope.as_ref())?;
    Ok(Json(json!(summary)))
}

// -- focus and instances --------------------------------------------------------------

#[derive(Deserialize)]
struct FocusBody {
    id: Option<String>,
}

async fn set_focus(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: FocusBody = parse_body(&body)?;
    let session = state.get(&s)?;
    let mut session = session.write();
    let focus = session.set_focus(body.id.as_deref())?;
    Ok(Json(json!({"focus": focus.map(|i| session.instance_detail(i))})))
}

async fn get_focus(State(state): State<Arc<AppState>>, Path(s): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.get(&s)?;
    let session = session.read();
    Ok(Json(json!({"focus": session.focus().map(|i| session.instance_detail(i))})))
}

#[derive(Deserialize)]
struct StepBody {
    #[serde(flatten)]
    mode: StepMode,
    #[serde(default)]
    scope: FocusScope,
}

async fn step_focus(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: StepBody = parse_body(&body)?;
    let session = state.get(&s)?;
    let mut session = session.write();
    let i = session.step_focus(body.mode, body.scope)?;
    Ok(Json(json!({"focus": session.instance_detail(i)})))
}

async fn list_instances(
    State(state): State<Arc<AppState>>,
    Path(s): Path<String>,
    Query(params): Params,
) -> ApiResult<Json<Value>> {
    let offset = param(&params, "offset")?.unwrap_or(0usize);
    let limit = param(&params, "limit")?.unwrap_or(50usize);
    let selection = params.get("selection").map(String::as_str);
    let rows = state.get(&s)?.read().list_instances(selection, offset, limit)?;
    Ok(Json(json!({"offset": offset, "limit": limit, "rows": rows})))
}

async fn get_instance(
    State(state): State<Arc<AppState>>,
    Path((s, id)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    Ok(Json(json!(state.get(&s)?.read().instance(&id)?)))
}

/// Serve `app` on `addr` until interrupted.
pub async fn serve(addr: std::net::SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Convenience used by tests and embedders: a fresh router with one session
/// preloaded from `dataset`.
pub fn router_with(dataset: Dataset) -> (Router, String) {
    let state = AppState::new();
    let id = state.insert(Session::new(dataset));
    (router(state), id)
}
