//! HTTP JSON API over the bellow design engine.
//!
//! Synchronous endpoints answer with the same canonical JSON the command-line
//! tool prints. Training and shape matching run as background jobs.

pub mod jobs;
pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use bellow_core::actuator::{Material, Violation};
use bellow_core::optimizer::MatchProblem;
use bellow_core::oracle::{read_dataset, DatasetGrid};
use bellow_core::pipeline::{self, EngineError, Model, SimulateRequest, ORACLE_MODEL};
use bellow_core::surrogate::{SurrogateModel, TrainConfig};

pub use jobs::{JobKind, JobRecord, JobRegistry, JobState};
pub use store::{Artifact, ArtifactKind, ProjectStore, StoreError, StoreReport};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_STORE: &str = "bellow-store";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), violations: Vec::new() } }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::NotFound(_) => StatusCode::NOT_FOUND,
            e if e.is_client_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self { status, body: ErrorBody { code: e.code().into(), message: e.to_string(), violations: e.violations().to_vec() } }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::Conflict { .. } => (StatusCode::CONFLICT, "conflict"),
            StoreError::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "store_error"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: &'a ErrorBody,
        }
        json_response(self.status, pipeline::to_json(&Envelope { error: &self.body }))
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

fn ok_json<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    Ok(json_response(status, pipeline::to_json(value)))
}

/// Parses a body by hand so malformed input gets the standard error envelope.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| EngineError::from(e).into())
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub max_train_jobs: usize,
    pub max_optimize_jobs: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { store_dir: DEFAULT_STORE.into(), max_train_jobs: 1, max_optimize_jobs: 1 }
    }
}

impl ServiceConfig {
    /// Reads `BELLOW_STORE`, `BELLOW_MAX_TRAIN_JOBS` and `BELLOW_MAX_OPTIMIZE_JOBS`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(s) = std::env::var("BELLOW_STORE") {
            c.store_dir = s.into();
        }
        let num = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
        c.max_train_jobs = num("BELLOW_MAX_TRAIN_JOBS").unwrap_or(c.max_train_jobs);
        c.max_optimize_jobs = num("BELLOW_MAX_OPTIMIZE_JOBS").unwrap_or(c.max_optimize_jobs);
        c
    }
}

/// Port from `BELLOW_PORT`, else [`DEFAULT_PORT`].
pub fn port_from_env() -> u16 {
    std::env::var("BELLOW_PORT").ok().and_then(|p| p.parse().ok()).unwrap_or(DEFAULT_PORT)
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ProjectStore>,
    pub jobs: Arc<JobRegistry>,
    train_slots: Arc<Semaphore>,
    optimize_slots: Arc<Semaphore>,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig) -> Result<Self, StoreError> {
        Ok(Self {
            store: Arc::new(ProjectStore::open(&cfg.store_dir)?),
            jobs: Arc::new(JobRegistry::default()),
            train_slots: Arc::new(Semaphore::new(cfg.max_train_jobs.max(1))),
            optimize_slots: Arc::new(Semaphore::new(cfg.max_optimize_jobs.max(1))),
        })
    }

    /// `"oracle"` or the id or name of a stored model.
    pub fn model(&self, key: &str) -> Result<Model, ApiError> {
        if key == ORACLE_MODEL {
            return Ok(pipeline::load_model(ORACLE_MODEL)?);
        }
        let a = self.store.find(ArtifactKind::Model, key)?;
        let text = String::from_utf8(self.store.read(&a)?).map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", "model file is not UTF-8"))?;
        let m = SurrogateModel::from_json(&text).map_err(EngineError::from)?;
        Ok(Model::Surrogate(Box::new(m)))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/segment", post(segment))
        .route("/api/simulate", post(simulate))
        .route("/api/mesh", post(mesh))
        .route("/api/optimize", post(optimize))
        .route("/api/train", post(train))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/result", get(job_result))
        .route("/api/models", get(list_models).post(upload_model))
        .route("/api/datasets", get(list_datasets).post(create_dataset))
        .route("/api/store/verify", get(verify_store))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig, port: u16) -> std::io::Result<()> {
    let state = AppState::new(&cfg).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(port, store = %cfg.store_dir.display(), "listening");
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> ApiResult {
    ok_json(StatusCode::OK, &serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Deserialize)]
struct NameQuery {
    name: Option<String>,
}

async fn segment(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let req: pipeline::SegmentRequest = parse_body(&body)?;
    let shape = st.store.put(ArtifactKind::Shape, None, pipeline::to_json(&req.points).as_bytes())?;
    let seg = blocking(move || Ok(pipeline::run_segment(&req)?)).await?;
    let mut resp = ok_json(StatusCode::OK, &seg)?;
    resp.headers_mut().insert("x-shape-id", HeaderValue::from_str(&shape.id).expect("hex id"));
    Ok(resp)
}

#[derive(Deserialize)]
struct SimulateBody {
    #[serde(flatten)]
    req: SimulateRequest,
    #[serde(default = "default_model")]
    model: String,
}

fn default_model() -> String {
    ORACLE_MODEL.into()
}

async fn simulate(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let b: SimulateBody = parse_body(&body)?;
    let model = st.model(&b.model)?;
    let sim = blocking(move || Ok(pipeline::simulate(&b.req, &model)?)).await?;
    ok_json(StatusCode::OK, &sim)
}

async fn mesh(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let req: pipeline::MeshRequest = parse_body(&body)?;
    let stl = blocking(move || Ok(pipeline::mesh_stl(&req)?)).await?;
    let a = st.store.put(ArtifactKind::Mesh, None, &stl)?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, HeaderValue::from_static("model/stl")), (header::HeaderName::from_static("x-artifact-id"), HeaderValue::from_str(&a.id).expect("hex id"))],
        stl,
    )
        .into_response())
}

#[derive(Deserialize)]
struct OptimizeBody {
    #[serde(flatten)]
    problem: MatchProblem,
    #[serde(default = "default_model")]
    model: String,
}

fn fail(jobs: &JobRegistry, id: &str, e: ApiError) {
    tracing::warn!(job = id, code = %e.body.code, "job failed");
    jobs.update(id, |j| {
        j.state = JobState::Failed;
        j.log.push(format!("failed: {}", e.body.message));
        j.error = Some(e.body);
    });
}

fn start(jobs: &JobRegistry, id: &str) {
    jobs.update(id, |j| {
        j.state = JobState::Running;
        j.log.push("running".into());
    });
}

fn finish(jobs: &JobRegistry, id: &str, artifact: &Artifact) {
    jobs.update(id, |j| {
        j.state = JobState::Done;
        j.progress = 1.0;
        j.result = Some(artifact.id.clone());
        j.log.push(format!("done: {}", artifact.file));
    });
}

async fn optimize(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let b: OptimizeBody = parse_body(&body)?;
    b.problem.validate().map_err(EngineError::from)?;
    let model = st.model(&b.model)?;
    let rec = st.jobs.create(JobKind::Optimize);
    let id = rec.id.clone();
    tokio::spawn(async move {
        let _permit = st.optimize_slots.clone().acquire_owned().await.expect("semaphore open");
        start(&st.jobs, &id);
        let (jobs, store, jid) = (st.jobs.clone(), st.store.clone(), id.clone());
        let out = blocking(move || {
            let mut on_progress = |p: &bellow_core::optimizer::Progress| {
                jobs.update(&jid, |j| j.progress = p.iteration as f64 / p.budget.max(1) as f64);
            };
            let result = pipeline::run_match(&b.problem, &model, &mut on_progress)?;
            let a = store.put(ArtifactKind::Result, None, pipeline::to_json(&result).as_bytes())?;
            jobs.update(&jid, |j| j.log.push(format!("status {:?}, mean cost {:e}", result.status, result.mean_cost)));
            Ok(a)
        })
        .await;
        match out {
            Ok(a) => finish(&st.jobs, &id, &a),
            Err(e) => fail(&st.jobs, &id, e),
        }
    });
    ok_json(StatusCode::ACCEPTED, &rec)
}

#[derive(Deserialize)]
struct TrainBody {
    /// Stored dataset id or name; generated from `grid` when absent.
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    grid: Option<DatasetGrid>,
    #[serde(default)]
    material: Material,
    #[serde(default)]
    config: Option<TrainConfig>,
    /// Name for the resulting model.
    #[serde(default)]
    name: Option<String>,
}

async fn train(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let b: TrainBody = parse_body(&body)?;
    let csv = match &b.dataset {
        Some(key) => {
            let a = st.store.find(ArtifactKind::Dataset, key)?;
            Some(st.store.read(&a)?)
        }
        None => None,
    };
    let cfg = b.config.clone().unwrap_or_default();
    let rec = st.jobs.create(JobKind::Train);
    let id = rec.id.clone();
    tokio::spawn(async move {
        let _permit = st.train_slots.clone().acquire_owned().await.expect("semaphore open");
        start(&st.jobs, &id);
        let (jobs, store, jid) = (st.jobs.clone(), st.store.clone(), id.clone());
        let out = blocking(move || {
            let csv = match csv {
                Some(c) => c,
                None => {
                    let (bytes, _) = pipeline::dataset_csv(&b.material, &b.grid.unwrap_or_default())?;
                    let a = store.put(ArtifactKind::Dataset, None, &bytes)?;
                    jobs.update(&jid, |j| j.log.push(format!("generated dataset {}", a.id)));
                    bytes
                }
            };
            let epochs = cfg.epochs.max(1);
            let mut on_epoch = |epoch: usize, mse: f64| {
                jobs.update(&jid, |j| {
                    j.progress = epoch as f64 / epochs as f64;
                    if epoch.is_multiple_of(100) {
                        j.log.push(format!("epoch {epoch}: train mse {mse:e}"));
                    }
                });
            };
            let (model, report) = pipeline::train_csv(&csv, &cfg, &mut on_epoch)?;
            jobs.update(&jid, |j| j.log.push(format!("test mse {:e}", report.test_mse)));
            Ok(store.put(ArtifactKind::Model, b.name.as_deref(), model.to_json().as_bytes())?)
        })
        .await;
        match out {
            Ok(a) => finish(&st.jobs, &id, &a),
            Err(e) => fail(&st.jobs, &id, e),
        }
    });
    ok_json(StatusCode::ACCEPTED, &rec)
}

async fn list_jobs(State(st): State<AppState>) -> ApiResult {
    ok_json(StatusCode::OK, &st.jobs.list())
}

fn job(st: &AppState, id: &str) -> Result<JobRecord, ApiError> {
    st.jobs.get(id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("job {id} not found")))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok_json(StatusCode::OK, &job(&st, &id)?)
}

/// The stored artifact, byte for byte.
async fn job_result(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let j = job(&st, &id)?;
    match (&j.state, &j.result, &j.error) {
        (JobState::Failed, _, Some(e)) => Err(ApiError { status: StatusCode::CONFLICT, body: e.clone() }),
        (JobState::Done, Some(rid), _) => {
            let kind = match j.kind {
                JobKind::Train => ArtifactKind::Model,
                JobKind::Optimize => ArtifactKind::Result,
            };
            let a = st.store.find(kind, rid)?;
            let bytes = st.store.read(&a)?;
            Ok((StatusCode::OK, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response())
        }
        _ => Err(ApiError::new(StatusCode::CONFLICT, "job_pending", format!("job {id} is {:?}", j.state).to_lowercase())),
    }
}

async fn list_models(State(st): State<AppState>) -> ApiResult {
    ok_json(StatusCode::OK, &st.store.list(ArtifactKind::Model))
}

async fn upload_model(State(st): State<AppState>, Query(q): Query<NameQuery>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::from(EngineError::invalid("malformed_model", "body is not UTF-8")))?;
    SurrogateModel::from_json(text).map_err(EngineError::from)?;
    ok_json(StatusCode::CREATED, &st.store.put(ArtifactKind::Model, q.name.as_deref(), &body)?)
}

async fn list_datasets(State(st): State<AppState>) -> ApiResult {
    ok_json(StatusCode::OK, &st.store.list(ArtifactKind::Dataset))
}

#[derive(Deserialize)]
struct DatasetBody {
    #[serde(default)]
    material: Material,
    #[serde(default)]
    grid: DatasetGrid,
}

#[derive(Serialize)]
struct DatasetCreated {
    #[serde(flatten)]
    artifact: Artifact,
    rows: usize,
}

/// A JSON body generates a dataset; anything else is uploaded as CSV.
async fn create_dataset(State(st): State<AppState>, Query(q): Query<NameQuery>, body: Bytes) -> ApiResult {
    let is_json = body.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{');
    let (bytes, rows) = if is_json {
        let b: DatasetBody = parse_body(&body)?;
        blocking(move || Ok(pipeline::dataset_csv(&b.material, &b.grid)?)).await?
    } else {
        let rows = read_dataset(&body[..]).map_err(EngineError::from)?.len();
        (body.to_vec(), rows)
    };
    let artifact = st.store.put(ArtifactKind::Dataset, q.name.as_deref(), &bytes)?;
    ok_json(StatusCode::CREATED, &DatasetCreated { artifact, rows })
}

async fn verify_store(State(st): State<AppState>) -> ApiResult {
    ok_json(StatusCode::OK, &st.store.verify()?)
}
