//! HTTP API: upload and edit scores, list instruments, run synthesis jobs.

mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use store::{new_id, JobRecord, JobState, ScoreRecord, Store, StoreError};

use crate::dsp::{write_wav, StftGeometry};
use crate::midi::{parse_midi, score_to_pianoroll, SparseRoll};
use crate::model::Model;
use crate::pipeline::{render_roll, DEFAULT_GL_ITERS};
use crate::train::load_checkpoint;

/// Server settings, read from a TOML file and overridable by CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoints: Vec<PathBuf>,
    pub persist_dir: Option<PathBuf>,
    pub workers: usize,
    pub gl_iters: usize,
    pub seed: u64,
    /// Allowed CORS origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoints: Vec::new(),
            persist_dir: None,
            workers: 2,
            gl_iters: DEFAULT_GL_ITERS,
            seed: 0,
            cors_origins: vec!["*".into()],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Checkpoint(#[from] crate::train::CheckpointError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }
}

/// A checkpoint available for synthesis.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub id: String,
    pub model: Arc<Model<f32>>,
}

impl LoadedModel {
    /// Loads a checkpoint file; its id is the file stem.
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let ck = load_checkpoint(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(LoadedModel {
            id,
            model: Arc::new(ck.model),
        })
    }
}

struct Shared {
    store: Store,
    models: Vec<LoadedModel>,
    gl_iters: usize,
    seed: u64,
}

impl Shared {
    fn frame_rate(&self) -> f64 {
        self.models
            .first()
            .map(|m| m.model.frame_rate())
            .unwrap_or_else(|| StftGeometry::default().frame_rate())
    }

    fn find_instrument(&self, label: &str) -> Option<(&LoadedModel, usize)> {
        self.models
            .iter()
            .find_map(|m| m.model.labels().iter().position(|l| l == label).map(|i| (m, i)))
    }
}

/// Router state: shared data plus the job queue's sending side.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
    queue: Sender<String>,
}

impl AppState {
    pub fn store(&self) -> &Store {
        &self.shared.store
    }
}

/// The running worker pool. Workers exit once every [`AppState`] is dropped.
pub struct Workers {
    handles: Vec<JoinHandle<()>>,
}

impl Workers {
    pub fn join(self) {
        for h in self.handles {
            let _ = h.join();
        }
    }
}

/// Creates the state and starts `workers` synthesis threads on a FIFO queue.
pub fn start(store: Store, models: Vec<LoadedModel>, workers: usize, gl_iters: usize, seed: u64) -> (AppState, Workers) {
    let shared = Arc::new(Shared {
        store,
        models,
        gl_iters,
        seed,
    });
    let (tx, rx) = crossbeam_channel::unbounded::<String>();
    let handles = (0..workers.max(1))
        .map(|i| {
            let shared = Arc::clone(&shared);
            let rx: Receiver<String> = rx.clone();
            std::thread::Builder::new()
                .name(format!("synth-worker-{i}"))
                .spawn(move || {
                    for job_id in rx {
                        run_job(&shared, &job_id);
                    }
                })
                .expect("spawn worker thread")
        })
        .collect();
    (AppState { shared, queue: tx }, Workers { handles })
}

fn run_job(shared: &Shared, job_id: &str) {
    let store = &shared.store;
    if let Err(e) = store.transition(job_id, JobState::Running, |_| {}) {
        log::error!("job {job_id}: {e}");
        return;
    }
    let outcome = (|| -> Result<(Vec<u8>, f64), (String, String)> {
        let job = store.job(job_id).ok_or_else(|| ("NotFound".to_string(), "job vanished".to_string()))?;
        let score = store
            .score(&job.score_id)
            .ok_or_else(|| ("NotFound".to_string(), format!("score {} not found", job.score_id)))?;
        let (loaded, index) = shared
            .find_instrument(&job.instrument_label)
            .ok_or_else(|| ("UnknownInstrument".to_string(), job.instrument_label.clone()))?;
        let roll = score
            .pianoroll
            .to_dense()
            .map_err(|e| (e.name().to_string(), e.to_string()))?;
        let rendered = render_roll(&loaded.model, &roll, index, shared.gl_iters, shared.seed)
            .map_err(|e| (e.name().to_string(), e.to_string()))?;
        Ok((write_wav(&rendered.audio), rendered.audio.duration_s()))
    })();
    let result = match outcome {
        Ok((wav, duration)) => {
            store.put_audio(job_id, wav);
            store.transition(job_id, JobState::Done, |r| {
                r.audio_url = Some(format!("/api/jobs/{job_id}/audio"));
                r.duration_s = Some(duration);
            })
        }
        Err((name, message)) => {
            log::warn!("job {job_id} failed: {name}: {message}");
            store.transition(job_id, JobState::Failed, |r| r.error = Some(format!("{name}: {message}")))
        }
    };
    if let Err(e) = result {
        log::error!("job {job_id}: {e}");
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    message: String,
}

fn error(status: StatusCode, name: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: name.to_string(),
            message: message.into(),
        }),
    )
        .into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UploadResponse {
    pub id: String,
    pub pianoroll: SparseRoll,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstrumentEntry {
    pub label: String,
    pub checkpoint_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesizeRequest {
    pub score_id: String,
    pub instrument_label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesizeResponse {
    pub job_id: String,
}

/// Accepts `multipart/form-data` (first file field) or a raw SMF body.
async fn upload_score(State(state): State<AppState>, req: Request) -> Response {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (bytes, filename) = if is_multipart {
        let mut mp = match Multipart::from_request(req, &state).await {
            Ok(mp) => mp,
            Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedUpload", e.body_text()),
        };
        match mp.next_field().await {
            Ok(Some(field)) => {
                let name = field.file_name().unwrap_or("upload.mid").to_string();
                match field.bytes().await {
                    Ok(b) => (b, name),
                    Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedUpload", e.body_text()),
                }
            }
            Ok(None) => (Bytes::new(), "upload.mid".to_string()),
            Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedUpload", e.body_text()),
        }
    } else {
        match Bytes::from_request(req, &state).await {
            Ok(b) => (b, "upload.mid".to_string()),
            Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedUpload", e.body_text()),
        }
    };
    let score = match parse_midi(&bytes) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.name(), e.to_string()),
    };
    let roll = match score_to_pianoroll(&score, state.shared.frame_rate(), 0, 127) {
        Ok(c) => c.roll.to_sparse(),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.name(), e.to_string()),
    };
    let id = new_id();
    state.shared.store.insert_score(ScoreRecord {
        id: id.clone(),
        pianoroll: roll.clone(),
        source_filename: filename,
        created_at: store::unix_now(),
    });
    Json(UploadResponse { id, pianoroll: roll }).into_response()
}

async fn get_roll(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.shared.store.score(&id) {
        Some(rec) => Json(rec.pianoroll).into_response(),
        None => error(StatusCode::NOT_FOUND, "NotFound", format!("score {id}")),
    }
}

async fn put_roll(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    if state.shared.store.score(&id).is_none() {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("score {id}"));
    }
    let roll: SparseRoll = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidRoll", e.to_string()),
    };
    if let Err(e) = roll.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.name(), e.to_string());
    }
    match state.shared.store.replace_roll(&id, roll) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, "NotFound", e.to_string()),
    }
}

async fn list_instruments(State(state): State<AppState>) -> Json<Vec<InstrumentEntry>> {
    Json(
        state
            .shared
            .models
            .iter()
            .flat_map(|m| {
                m.model.labels().iter().map(|l| InstrumentEntry {
                    label: l.clone(),
                    checkpoint_id: m.id.clone(),
                })
            })
            .collect(),
    )
}

async fn synthesize(State(state): State<AppState>, body: Bytes) -> Response {
    let req: SynthesizeRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest", e.to_string()),
    };
    if state.shared.store.score(&req.score_id).is_none() {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("score {}", req.score_id));
    }
    if state.shared.find_instrument(&req.instrument_label).is_none() {
        return error(
            StatusCode::NOT_FOUND,
            "UnknownInstrument",
            format!("instrument {:?}", req.instrument_label),
        );
    }
    let job_id = new_id();
    state.shared.store.insert_job(JobRecord {
        id: job_id.clone(),
        score_id: req.score_id,
        instrument_label: req.instrument_label,
        state: JobState::Queued,
        history: vec![JobState::Queued],
        error: None,
        audio_url: None,
        duration_s: None,
        created_at: store::unix_now(),
    });
    if state.queue.send(job_id.clone()).is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "WorkersStopped", "no synthesis workers are running");
    }
    (StatusCode::ACCEPTED, Json(SynthesizeResponse { job_id })).into_response()
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.shared.store.job(&id) {
        Some(job) => Json(job).into_response(),
        None => error(StatusCode::NOT_FOUND, "NotFound", format!("job {id}")),
    }
}

async fn get_audio(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(job) = state.shared.store.job(&id) else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("job {id}"));
    };
    match (job.state, state.shared.store.audio(&id)) {
        (JobState::Done, Some(wav)) => ([(header::CONTENT_TYPE, "audio/wav")], wav).into_response(),
        (s, _) => error(StatusCode::CONFLICT, "NotReady", format!("job {id} is {s:?}")),
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.is_empty() || origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let values: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(values))
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/api/scores", post(upload_score))
        .route("/api/scores/{id}/pianoroll", get(get_roll).put(put_roll))
        .route("/api/instruments", get(list_instruments))
        .route("/api/synthesize", post(synthesize))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/audio", get(get_audio))
        .layer(cors(cors_origins))
        .with_state(state)
}

/// Loads checkpoints, binds and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let models = config
        .checkpoints
        .iter()
        .map(|p| LoadedModel::from_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let store = match &config.persist_dir {
        Some(dir) => Store::persistent(dir)?,
        None => Store::in_memory(),
    };
    let (state, workers) = start(store, models, config.workers, config.gl_iters, config.seed);
    let app = router(state, &config.cors_origins);
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|e| ServiceError::Config {
            path: "host".into(),
            message: format!("{e}"),
        })?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    // Queued jobs are abandoned on shutdown; workers die with the process.
    drop(workers);
    Ok(())
}
