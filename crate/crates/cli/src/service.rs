//! Session-based HTTP API consumed by the correspondence picker.
//!
//! Every session shares the mesh and image given at startup and owns its own
//! correspondence set and latest result. A run executes on a blocking worker;
//! while it is in flight the session rejects writes and result reads with 409.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use texdeform::obj::{load_obj, mtl_string, obj_string};
use texdeform::{CorrespondenceSet, DetailMode, Error, ImageInfo, LaplacianScheme, Mesh, Report, RunResult, SolverConfig, Stage};

/// Mesh and image shared by all sessions.
pub struct Assets {
    pub mesh: Mesh,
    pub mesh_obj: String,
    pub image: ImageInfo,
    pub image_bytes: Vec<u8>,
    pub image_type: &'static str,
    pub texture_name: String,
}

impl Assets {
    pub fn load(mesh_path: &Path, image_path: &Path) -> texdeform::Result<Self> {
        let mesh = load_obj(mesh_path)?;
        let image = ImageInfo::probe(image_path)?;
        let image_bytes = std::fs::read(image_path).map_err(|e| Error::io(image_path, e))?;
        Self::new(mesh, image, image_bytes)
    }

    pub fn new(mesh: Mesh, image: ImageInfo, image_bytes: Vec<u8>) -> texdeform::Result<Self> {
        let texture_name = image
            .path
            .as_ref()
            .and_then(|p| p.file_name())
            .map_or_else(|| "texture.png".to_owned(), |s| s.to_string_lossy().into_owned());
        let image_type = match Path::new(&texture_name).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jpg" | "jpeg") => "image/jpeg",
            _ => "image/png",
        };
        Ok(Self {
            mesh_obj: obj_string(&mesh, None, None)?,
            mesh,
            image,
            image_bytes,
            image_type,
            texture_name,
        })
    }
}

#[derive(Default)]
struct Session {
    corr: Option<CorrespondenceSet>,
    running: bool,
    result: Option<Arc<(RunResult, SolverConfig)>>,
    error: Option<String>,
}

impl Session {
    fn state(&self) -> &'static str {
        match (self.running, &self.result, &self.corr) {
            (true, _, _) => "running",
            (false, Some(_), _) => "ran",
            (false, None, Some(_)) => "annotated",
            (false, None, None) => "created",
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    assets: Arc<Assets>,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn new(assets: Assets) -> Self {
        Self {
            assets: Arc::new(assets),
            sessions: Arc::default(),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", get(status))
        .route("/session/{id}/mesh", get(mesh))
        .route("/session/{id}/image", get(image))
        .route("/session/{id}/correspondences", put(put_correspondences).get(get_correspondences))
        .route("/session/{id}/run", post(start_run))
        .route("/session/{id}/result/mesh", get(result_mesh))
        .route("/session/{id}/result/mtl", get(result_mtl))
        .route("/session/{id}/result/report", get(result_report))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            path: None,
        }
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "a run is in progress for this session")
    }

    fn invalid(err: &Error) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: err.to_string(),
            path: err.field_path(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.path {
            Some(path) => json!({ "error": self.message, "path": path }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock(session: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    session.lock().expect("session poisoned")
}

async fn create_session(State(app): State<AppState>) -> impl IntoResponse {
    let id = uuid::Uuid::new_v4().simple().to_string();
    app.sessions.write().expect("session table poisoned").insert(id.clone(), Arc::default());
    (StatusCode::CREATED, Json(json!({ "id": id })))
}

async fn status(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(json!({
        "id": id,
        "state": s.state(),
        "pair_count": s.corr.as_ref().map_or(0, |c| c.len()),
        "image": { "width": app.assets.image.width, "height": app.assets.image.height },
        "vertex_count": app.assets.mesh.vertex_count(),
        "error": s.error,
    })))
}

async fn mesh(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    app.session(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], app.assets.mesh_obj.clone()).into_response())
}

async fn image(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    app.session(&id)?;
    Ok(([(header::CONTENT_TYPE, app.assets.image_type)], app.assets.image_bytes.clone()).into_response())
}

/// Parses and validates a correspondence document against the session's mesh and image.
pub fn validate_correspondences(text: &str, assets: &Assets) -> Result<CorrespondenceSet, ApiError> {
    let set = CorrespondenceSet::from_json_str(text).map_err(|e| ApiError::invalid(&e))?;
    let (w, h) = (assets.image.width as f64, assets.image.height as f64);
    if set.width() != w || set.height() != h {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            message: format!("image size {}x{} does not match the session image {w}x{h}", set.width(), set.height()),
            path: Some("image".into()),
        });
    }
    let n = assets.mesh.vertex_count();
    if let Some(i) = set.pairs().iter().position(|p| p.vertex >= n) {
        let err = Error::InvalidVertex {
            id: set.pairs()[i].vertex,
            count: n,
        };
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            message: err.to_string(),
            path: Some(format!("pairs[{i}].vertex")),
        });
    }
    Ok(set)
}

async fn put_correspondences(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let session = app.session(&id)?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "body is not UTF-8"))?;
    let set = validate_correspondences(text, &app.assets)?;
    let mut s = lock(&session);
    if s.running {
        return Err(ApiError::busy());
    }
    let count = set.len();
    s.corr = Some(set);
    Ok(Json(json!({ "pair_count": count })))
}

async fn get_correspondences(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let s = lock(&session);
    let corr = s
        .corr
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no correspondences uploaded"))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], corr.to_json_string()).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunParams {
    alpha: Option<f64>,
    beta: Option<f64>,
    eps: Option<f64>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    laplacian: Option<LaplacianScheme>,
    mode: Option<DetailMode>,
}

impl RunParams {
    fn config(self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            eps: self.eps.unwrap_or(d.eps),
            tol: self.tol.unwrap_or(d.tol),
            max_iterations: self.max_iters.unwrap_or(d.max_iterations),
            laplacian: self.laplacian.unwrap_or(d.laplacian),
            mode: self.mode.unwrap_or(d.mode),
            ..d
        }
    }
}

#[derive(Debug, Deserialize)]
struct RunQuery {
    #[serde(default = "yes")]
    wait: bool,
}

fn yes() -> bool {
    true
}

/// Response body of a finished run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub stop_reason: texdeform::StopReason,
    pub iterations: usize,
    pub feature_count: usize,
    pub energy: texdeform::formats::EnergyEntry,
    pub out_of_image_uv_count: usize,
    pub total_seconds: f64,
}

impl RunSummary {
    fn new(result: &RunResult) -> Self {
        Self {
            converged: result.converged(),
            stop_reason: result.stop_reason,
            iterations: result.iterations,
            feature_count: result.feature_count,
            energy: texdeform::formats::EnergyEntry {
                total: result.energy.total,
                detail: result.energy.detail,
                projection: result.energy.projection,
            },
            out_of_image_uv_count: result.out_of_image.len(),
            total_seconds: result.timings.total_seconds,
        }
    }
}

/// Starts a run. With `?wait=false` it answers 202 at once and the client
/// polls `GET /session/{id}`; otherwise it answers with the run summary.
async fn start_run(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<RunQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let params: RunParams = if body.iter().all(u8::is_ascii_whitespace) {
        serde_json::from_str("{}").expect("empty object")
    } else {
        let de = &mut serde_json::Deserializer::from_slice(&body);
        serde_path_to_error::deserialize(de).map_err(|e| ApiError {
            status: StatusCode::BAD_REQUEST,
            message: e.inner().to_string(),
            path: Some(e.path().to_string()),
        })?
    };
    let cfg = params.config();
    let corr = {
        let mut s = lock(&session);
        if s.running {
            return Err(ApiError::busy());
        }
        let corr = s
            .corr
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "upload correspondences before running"))?;
        s.running = true;
        s.error = None;
        corr
    };

    let assets = app.assets.clone();
    let worker = session.clone();
    let task = tokio::task::spawn_blocking(move || {
        let outcome = texdeform::run(&assets.mesh, &assets.image, &corr, &cfg);
        let mut s = lock(&worker);
        s.running = false;
        match outcome {
            Ok(result) => {
                let summary = RunSummary::new(&result);
                s.result = Some(Arc::new((result, cfg)));
                Ok(summary)
            }
            Err(e) => {
                s.error = Some(e.to_string());
                Err(e)
            }
        }
    });

    if !query.wait {
        return Ok((StatusCode::ACCEPTED, Json(json!({ "state": "running" }))).into_response());
    }
    match task.await {
        Ok(Ok(summary)) => Ok(Json(summary).into_response()),
        Ok(Err(e)) => Err(run_error(&e)),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("run task failed: {e}"))),
    }
}

fn run_error(err: &Error) -> ApiError {
    let status = match err {
        Error::Stage { stage: Stage::Setup, .. } | Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    ApiError::new(status, err.to_string())
}

fn latest(app: &AppState, id: &str) -> ApiResult<Arc<(RunResult, SolverConfig)>> {
    let session = app.session(id)?;
    let s = lock(&session);
    if s.running {
        return Err(ApiError::busy());
    }
    s.result
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no finished run in this session"))
}

async fn result_mesh(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let latest = latest(&app, &id)?;
    let text = obj_string(&latest.0.mesh, Some(&latest.0.uvs), Some("mesh.mtl"))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn result_mtl(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    latest(&app, &id)?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], mtl_string(&app.assets.texture_name)).into_response())
}

async fn result_report(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let latest = latest(&app, &id)?;
    let report = Report::new(&latest.0, &latest.1);
    Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json_string()).into_response())
}
