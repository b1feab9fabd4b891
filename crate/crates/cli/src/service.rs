//! Local HTTP/JSON service for marker editing, training jobs and the
//! interactive selection loop.
//!
//! Every write goes through the state mutex and is appended to the
//! mutation log before it is applied, so replaying the log over the initial
//! dataset reproduces the server state.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use flimsod_core::decoders::{DecoderKind, WeightVector};
use flimsod_core::encoder::{ArchitectureConfig, EncoderModel};
use flimsod_core::evalsel::{selection_init, ScoredPool, SelectionEvent, SelectionSession};
use flimsod_core::imgcore::encode_saliency_png;
use flimsod_core::markers::{parse_markers, MarkerSet};
use flimsod_core::pipeline::infer_saliency;

use crate::commands::{append_line, fit, score_session, selection_pool, Trained};
use crate::config::PipelineConfig;
use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobPhase {
    Queued,
    Training,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub id: u64,
    pub phase: JobPhase,
    pub progress: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

/// One line of the mutation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    PutMarkers { id: String, text: String },
    /// Training inputs are captured at queue time.
    TrainQueued { job: u64, ids: Vec<String>, markers: BTreeMap<String, String> },
    TrainStarted { job: u64 },
    TrainFinished { job: u64, error: Option<String> },
    Selection { event: SelectionEvent },
}

type Retrain<'a> = dyn FnMut(&[String], &BTreeMap<String, String>) -> Result<Trained> + 'a;

/// Everything the log can change.
#[derive(Debug, Clone, Default)]
pub struct ServiceState {
    pub markers: BTreeMap<String, String>,
    pub jobs: Vec<JobState>,
    pub model: Option<Trained>,
    pub session: Option<SelectionSession>,
    pending: BTreeMap<u64, (Vec<String>, BTreeMap<String, String>)>,
    /// Ranking cached for the training set it was computed on.
    scored: Option<(Vec<String>, ScoredPool)>,
}

impl ServiceState {
    pub fn running_job(&self) -> Option<u64> {
        self.jobs
            .iter()
            .find(|j| matches!(j.phase, JobPhase::Queued | JobPhase::Training))
            .map(|j| j.id)
    }

    fn job_mut(&mut self, id: u64) -> Option<&mut JobState> {
        self.jobs.iter_mut().find(|j| j.id == id)
    }

    /// Applies one logged mutation. `retrain` rebuilds the model of a
    /// finished job from its captured inputs.
    fn apply(&mut self, m: &Mutation, retrain: &mut Retrain<'_>) -> Result<()> {
        match m {
            Mutation::PutMarkers { id, text } => {
                self.markers.insert(id.clone(), text.clone());
            }
            Mutation::TrainQueued { job, ids, markers } => {
                self.jobs.push(JobState {
                    id: *job,
                    phase: JobPhase::Queued,
                    progress: 0.0,
                    error: None,
                });
                self.pending.insert(*job, (ids.clone(), markers.clone()));
            }
            Mutation::TrainStarted { job } => {
                if let Some(j) = self.job_mut(*job) {
                    j.phase = JobPhase::Training;
                }
            }
            Mutation::TrainFinished { job, error } => {
                let inputs = self.pending.remove(job);
                if error.is_none() {
                    if let Some((ids, markers)) = inputs {
                        self.model = Some(retrain(&ids, &markers)?);
                    }
                }
                if let Some(j) = self.job_mut(*job) {
                    j.phase = if error.is_some() { JobPhase::Failed } else { JobPhase::Done };
                    j.progress = 1.0;
                    j.error = error.clone();
                }
            }
            Mutation::Selection { event } => match event {
                SelectionEvent::Init { .. } => {
                    self.session = Some(SelectionSession::replay(std::slice::from_ref(event))?);
                }
                SelectionEvent::Step {
                    x, candidate, accept, ..
                } => {
                    let s = self
                        .session
                        .as_mut()
                        .ok_or_else(|| anyhow::anyhow!("selection step before init"))?;
                    s.decide(*accept, *x, candidate)?;
                }
            },
        }
        Ok(())
    }
}

/// Shared service context.
pub struct AppState {
    pub cfg: PipelineConfig,
    pub arch: ArchitectureConfig,
    pub ds: Dataset,
    pub images: Vec<ImageInfo>,
    log_path: Option<PathBuf>,
    state: Mutex<ServiceState>,
}

pub type Shared = Arc<AppState>;

fn parse_marker_texts(texts: &BTreeMap<String, String>) -> Result<MarkerSet> {
    let mut ms = MarkerSet::new();
    for text in texts.values() {
        ms.insert(parse_markers(text)?);
    }
    Ok(ms)
}

impl AppState {
    /// Loads the dataset, replays an existing mutation log and starts a
    /// selection session when none is logged and the pool is non-empty.
    pub fn open(cfg: PipelineConfig) -> Result<Shared> {
        let arch = cfg.architecture()?;
        let ds = Dataset::from_config(&cfg);
        let mut images = Vec::new();
        for id in ds.image_ids()? {
            let img = ds.load_image(&id)?;
            images.push(ImageInfo {
                id,
                width: img.width(),
                height: img.height(),
            });
        }
        let log_path = cfg.work_dir.as_ref().map(|d| d.join("mutations.jsonl"));
        if let Some(dir) = &cfg.work_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let app = Arc::new(AppState {
            state: Mutex::new(ServiceState::default()),
            cfg,
            arch,
            ds,
            images,
            log_path,
        });
        let initial = app.initial_state()?;
        let log = app.read_log()?;
        let mut st = app.replay(initial, &log)?;
        if st.model.is_none() {
            if let Some(p) = app.cfg.model.as_ref().filter(|p| p.is_file()) {
                st.model = Some(Trained {
                    model: EncoderModel::load(p)?,
                    bp: match &app.cfg.bp_weights {
                        Some(w) if w.is_file() => Some(crate::commands::load_bp_weights(w)?),
                        _ => None,
                    },
                });
            }
        }
        *app.lock() = st;
        if app.lock().session.is_none() {
            let pool = selection_pool(&app.ds).unwrap_or_default();
            if !pool.is_empty() {
                let s = selection_init(&pool, app.cfg.seed)?;
                app.commit(Mutation::Selection {
                    event: s.history[0].clone(),
                })?;
            }
        }
        Ok(app)
    }

    fn lock(&self) -> MutexGuard<'_, ServiceState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Marker texts on disk when the service starts.
    pub fn initial_state(&self) -> Result<ServiceState> {
        let mut st = ServiceState::default();
        for info in &self.images {
            let path = self.ds.marker_path(&info.id);
            if path.is_file() {
                st.markers.insert(info.id.clone(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(st)
    }

    pub fn read_log(&self) -> Result<Vec<Mutation>> {
        let Some(path) = self.log_path.as_ref().filter(|p| p.is_file()) else {
            return Ok(Vec::new());
        };
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).with_context(|| format!("bad log line in {}", path.display())))
            .collect()
    }

    /// State obtained by applying `log` to `initial`.
    pub fn replay(&self, mut initial: ServiceState, log: &[Mutation]) -> Result<ServiceState> {
        let mut retrain = |ids: &[String], texts: &BTreeMap<String, String>| self.train(ids, texts);
        for m in log {
            initial.apply(m, &mut retrain)?;
        }
        // jobs cut short by a restart cannot resume
        for j in initial.jobs.iter_mut() {
            if matches!(j.phase, JobPhase::Queued | JobPhase::Training) {
                j.phase = JobPhase::Failed;
                j.error = Some("interrupted by a restart".into());
            }
        }
        Ok(initial)
    }

    fn train(&self, ids: &[String], texts: &BTreeMap<String, String>) -> Result<Trained> {
        let ms = parse_marker_texts(texts)?;
        let with_bp = self.cfg.decoder == DecoderKind::Bp;
        fit(&self.cfg, &self.arch, &self.ds, ids, &ms, with_bp)
    }

    /// Logs then applies a mutation that needs no retraining.
    fn commit(&self, m: Mutation) -> Result<()> {
        let mut st = self.lock();
        self.commit_locked(&mut st, m)
    }

    fn commit_locked(&self, st: &mut ServiceState, m: Mutation) -> Result<()> {
        if let Some(path) = &self.log_path {
            append_line(path, &serde_json::to_string(&m)?)?;
        }
        st.apply(&m, &mut |_, _| unreachable!("live commits never retrain"))
    }

    pub fn snapshot(&self) -> ServiceState {
        self.lock().clone()
    }

    fn image_info(&self, id: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn bad_request(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{file}", get(image_png))
        .route("/api/markers/{id}", get(get_markers).put(put_markers))
        .route("/api/train", post(start_train))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/infer/{id}", post(infer))
        .route("/api/selection", get(get_selection))
        .route("/api/session", get(get_selection))
        .route("/api/selection/step", post(selection_step))
        .with_state(app)
}

async fn list_images(State(app): State<Shared>) -> Json<Vec<ImageInfo>> {
    Json(app.images.clone())
}

async fn image_png(State(app): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = file
        .strip_suffix(".png")
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "images are served as <id>.png"))?;
    if app.image_info(id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no image {id}")));
    }
    let bytes = std::fs::read(app.ds.image_path(id)).map_err(|e| ApiError::from(anyhow::Error::from(e)))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn get_markers(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = app
        .lock()
        .markers
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no markers for {id}")))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn put_markers(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let info = app
        .image_info(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no image {id}")))?;
    let text = String::from_utf8(body.to_vec()).map_err(bad_request)?;
    let parsed = parse_markers(&text).map_err(bad_request)?;
    if parsed.image_id != id {
        return Err(bad_request(format!("markers describe {:?}, not {id:?}", parsed.image_id)));
    }
    if (parsed.width, parsed.height) != (info.width, info.height) {
        return Err(bad_request(format!(
            "markers are for a {}x{} image, {id} is {}x{}",
            parsed.width, parsed.height, info.width, info.height
        )));
    }
    {
        let mut st = app.lock();
        app.commit_locked(
            &mut st,
            Mutation::PutMarkers {
                id: id.clone(),
                text: text.clone(),
            },
        )?;
        std::fs::write(app.ds.marker_path(&id), &text).map_err(|e| ApiError::from(anyhow::Error::from(e)))?;
    }
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn start_train(State(app): State<Shared>) -> ApiResult<Response> {
    let (job, ids, texts) = {
        let mut st = app.lock();
        if let Some(running) = st.running_job() {
            let mut resp = ApiError::new(
                StatusCode::CONFLICT,
                format!("training job {running} is still running"),
            )
            .into_response();
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("5"));
            return Ok(resp);
        }
        let ids: Vec<String> = match &app.cfg.train {
            Some(ids) => ids.clone(),
            None => st.markers.keys().cloned().collect(),
        };
        if let Some(missing) = ids.iter().find(|id| !st.markers.contains_key(*id)) {
            return Err(bad_request(format!("training image {missing} has no markers")));
        }
        if ids.is_empty() {
            return Err(bad_request("no image has markers yet"));
        }
        let texts: BTreeMap<String, String> =
            ids.iter().map(|id| (id.clone(), st.markers[id].clone())).collect();
        let job = st.jobs.last().map_or(1, |j| j.id + 1);
        app.commit_locked(
            &mut st,
            Mutation::TrainQueued {
                job,
                ids: ids.clone(),
                markers: texts.clone(),
            },
        )?;
        (job, ids, texts)
    };
    let worker = app.clone();
    tokio::task::spawn_blocking(move || run_training(&worker, job, &ids, &texts));
    let state = app.lock().jobs.iter().find(|j| j.id == job).cloned().expect("job was queued");
    Ok((StatusCode::ACCEPTED, Json(state)).into_response())
}

fn run_training(app: &AppState, job: u64, ids: &[String], texts: &BTreeMap<String, String>) {
    if let Err(e) = app.commit(Mutation::TrainStarted { job }) {
        log::error!("job {job}: {e:#}");
    }
    let result = app.train(ids, texts);
    let mut st = app.lock();
    let error = result.as_ref().err().map(|e| format!("{e:#}"));
    let m = Mutation::TrainFinished { job, error: error.clone() };
    let logged = match &app.log_path {
        Some(path) => serde_json::to_string(&m).map_err(anyhow::Error::from).and_then(|l| append_line(path, &l)),
        None => Ok(()),
    };
    if let Err(e) = logged {
        log::error!("job {job}: could not log completion: {e:#}");
    }
    let mut trained = result.ok();
    if let Err(e) = st.apply(&m, &mut |_, _| trained.take().ok_or_else(|| anyhow::anyhow!("no model"))) {
        log::error!("job {job}: {e:#}");
    }
    if let (Some(t), Some(path)) = (&st.model, &app.cfg.model) {
        if error.is_none() {
            if let Err(e) = t.model.save(path) {
                log::error!("job {job}: writing {}: {e}", path.display());
            }
        }
    }
    st.scored = None;
    match &error {
        None => log::info!("job {job} done"),
        Some(e) => log::warn!("job {job} failed: {e}"),
    }
}

async fn get_job(State(app): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<JobState>> {
    app.lock()
        .jobs
        .iter()
        .find(|j| j.id == id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}

#[derive(Debug, Deserialize)]
struct InferQuery {
    decoder: Option<String>,
    block: Option<usize>,
}

async fn infer(State(app): State<Shared>, Path(id): Path<String>, Query(q): Query<InferQuery>) -> ApiResult<Response> {
    if app.image_info(&id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no image {id}")));
    }
    let kind: DecoderKind = match &q.decoder {
        Some(s) => s.parse().map_err(bad_request)?,
        None => app.cfg.decoder,
    };
    let block = q.block.unwrap_or(app.cfg.block);
    let trained = app
        .lock()
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no trained model yet"))?;
    if block == 0 || block > trained.model.num_blocks() {
        return Err(bad_request(format!("block {block} is outside 1..={}", trained.model.num_blocks())));
    }
    if kind == DecoderKind::Bp && trained.bp.is_none() {
        return Err(bad_request("the bp decoder has no trained weights"));
    }
    let worker = app.clone();
    let (png, lo, hi) = blocking(move || {
        let img = worker.ds.load_image(&id)?;
        let bp: Option<&WeightVector> = trained.bp.as_ref();
        let sal = infer_saliency(&img, &trained.model, block, kind, &worker.cfg.decoder_options, bp)?;
        Ok(encode_saliency_png(&sal)?)
    })
    .await?;
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("{lo} {hi}")) {
        resp.headers_mut().insert("x-saliency-range", v);
    }
    Ok(resp)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionView {
    pub training: Vec<String>,
    pub pool: Vec<String>,
    pub x_prev: f64,
    pub z_prev: Option<String>,
    pub steps: usize,
    /// Mean F_β over the pool for the current training set.
    pub x: Option<f64>,
    /// Pool images, worst F_β first.
    pub ranked: Vec<(String, f64)>,
    pub score_error: Option<String>,
}

/// Ranking for the current training set, computed once per set.
async fn current_score(app: &Shared) -> ApiResult<std::result::Result<ScoredPool, String>> {
    let (session, texts) = {
        let st = app.lock();
        let Some(session) = st.session.clone() else {
            return Err(ApiError::new(StatusCode::NOT_FOUND, "no selection session (no image has markers and ground truth)"));
        };
        if let Some((t, s)) = &st.scored {
            if *t == session.training {
                return Ok(Ok(s.clone()));
            }
        }
        (session, st.markers.clone())
    };
    if session.pool.is_empty() {
        return Ok(Err("the pool is empty".into()));
    }
    let worker = app.clone();
    let training = session.training.clone();
    let scored = blocking(move || {
        let ms = parse_marker_texts(&texts)?;
        Ok(score_session(&worker.cfg, &worker.arch, &worker.ds, &ms, &session).map_err(|e| format!("{e:#}")))
    })
    .await?;
    if let Ok(s) = &scored {
        app.lock().scored = Some((training, s.clone()));
    }
    Ok(scored)
}

fn view(session: &SelectionSession, scored: std::result::Result<ScoredPool, String>) -> SelectionView {
    let (x, ranked, score_error) = match scored {
        Ok(s) => (Some(s.x), s.ranked, None),
        Err(e) => (None, Vec::new(), Some(e)),
    };
    SelectionView {
        training: session.training.clone(),
        pool: session.pool.iter().cloned().collect(),
        x_prev: session.x_prev,
        z_prev: session.z_prev.clone(),
        steps: session.history.len().saturating_sub(1),
        x,
        ranked,
        score_error,
    }
}

async fn get_selection(State(app): State<Shared>) -> ApiResult<Json<SelectionView>> {
    let scored = current_score(&app).await?;
    let session = app.lock().session.clone().expect("checked by current_score");
    Ok(Json(view(&session, scored)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepRequest {
    pub accept: bool,
    pub candidate: String,
    /// Score of the current training set; computed when omitted.
    #[serde(default)]
    pub x: Option<f64>,
}

async fn selection_step(State(app): State<Shared>, Json(req): Json<StepRequest>) -> ApiResult<Json<SelectionView>> {
    let x = match req.x {
        Some(x) => x,
        None => current_score(&app).await?.map_err(|e| ApiError::new(StatusCode::CONFLICT, e))?.x,
    };
    let mut st = app.lock();
    let mut session = st
        .session
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no selection session"))?;
    // validate on a copy so a rejected step leaves no log entry
    session.decide(req.accept, x, &req.candidate).map_err(bad_request)?;
    let event = session.history.last().cloned().expect("step logged");
    app.commit_locked(&mut st, Mutation::Selection { event })?;
    let session = st.session.clone().expect("session exists");
    let cached = st.scored.clone().filter(|(t, _)| *t == session.training).map(|(_, s)| s);
    Ok(Json(view(&session, cached.ok_or_else(|| "not scored yet".to_string()))))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(app: Shared, addr: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}
