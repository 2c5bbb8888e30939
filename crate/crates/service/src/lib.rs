//! HTTP field-session service.
//!
//! A client creates a session, posts photographs one at a time and gets back
//! a verdict plus a link to the incoming image joined with its best match.
//! Each session is stored under `<root>/<session_id>/` in the library's
//! on-disk layout, with `pairs/NNNN.png` added for every image that had a
//! match. Sessions saved by an earlier process are loaded on first access.
//!
//! Ingests into one session are serialized by a per-session lock. Reads
//! (reports, pairs, images) use the last published manifest and never wait
//! on an ingest in progress.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use outcrop_core::imagecore::{decode, FormatHint};
use outcrop_core::library::{image_path, pair_path, Manifest, MANIFEST_FILE};
use outcrop_core::{CompressionProfile, Juxtaposition, NoveltyThreshold, Score, Session, SessionConfig, VerdictKind};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::task::spawn_blocking;
use tower_http::services::ServeDir;

mod error;

pub use error::ApiError;

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory holding one subdirectory per session.
    pub root: PathBuf,
    /// Static files served under `/`, if any.
    pub ui_dir: Option<PathBuf>,
    /// Score comparison loops on the rayon pool.
    pub parallel: bool,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            root: root.into(),
            ui_dir: None,
            parallel: true,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

struct Slot {
    id: String,
    dir: PathBuf,
    session: Arc<Mutex<Session>>,
    published: RwLock<Arc<Manifest>>,
}

impl Slot {
    fn new(id: String, dir: PathBuf, session: Session) -> Self {
        let published = RwLock::new(Arc::new(session.manifest()));
        Slot {
            id,
            dir,
            session: Arc::new(Mutex::new(session)),
            published,
        }
    }

    fn snapshot(&self) -> Arc<Manifest> {
        self.published.read().expect("snapshot lock poisoned").clone()
    }
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                sessions: RwLock::new(HashMap::new()),
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn insert(&self, slot: Slot) -> Arc<Slot> {
        let mut map = self.inner.sessions.write().expect("session map poisoned");
        map.entry(slot.id.clone()).or_insert_with(|| Arc::new(slot)).clone()
    }

    async fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.inner.sessions.read().expect("session map poisoned").get(id) {
            return Ok(slot.clone());
        }
        let missing = || ApiError::NotFound(format!("no session {id:?}"));
        // ids double as directory names
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(missing());
        }
        let dir = self.inner.config.root.join(id);
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(missing());
        }
        let parallel = self.inner.config.parallel;
        let load_dir = dir.clone();
        let mut session = spawn_blocking(move || Session::load(&load_dir)).await??;
        session.set_parallel(parallel);
        Ok(self.insert(Slot::new(id.to_string(), dir, session)))
    }
}

/// Body of `POST /sessions`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub threshold: Option<f64>,
    pub level: Option<u32>,
    pub resize: Option<Resize>,
    pub juxtapose: Option<Juxtaposition>,
}

/// Canonical size, either `[w, h]` or `"WxH"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Resize {
    Pair([u32; 2]),
    Text(String),
}

impl Resize {
    pub fn dims(&self) -> Result<(u32, u32), String> {
        let (w, h) = match self {
            Resize::Pair([w, h]) => (*w, *h),
            Resize::Text(s) => parse_dims(s)?,
        };
        if w == 0 || h == 0 {
            return Err(format!("resize must be at least 1x1, got {w}x{h}"));
        }
        Ok((w, h))
    }
}

/// Parses `WxH`.
pub fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    let bad = || format!("expected WxH, got {s:?}");
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        w.trim().parse().map_err(|_| bad())?,
        h.trim().parse().map_err(|_| bad())?,
    ))
}

impl CreateSession {
    pub fn to_config(&self, parallel: bool) -> Result<SessionConfig, ApiError> {
        let bad = |m: String| ApiError::BadRequest(m);
        let threshold = match self.threshold {
            Some(t) => NoveltyThreshold::new(t).map_err(|e| bad(e.to_string()))?,
            None => NoveltyThreshold::default(),
        };
        let profile = match self.level {
            Some(l) => CompressionProfile::with_level(l).map_err(|e| bad(e.to_string()))?,
            None => CompressionProfile::default(),
        };
        let canonical_dims = self.resize.as_ref().map(Resize::dims).transpose().map_err(bad)?;
        Ok(SessionConfig {
            profile,
            threshold,
            juxtaposition: self.juxtapose.unwrap_or_default(),
            canonical_dims,
            parallel,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub threshold: Score,
    pub level: u32,
}

/// Response to an image upload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiVerdict {
    pub image_id: u64,
    pub verdict: VerdictKind,
    pub score: Score,
    pub best_match_id: Option<u64>,
    pub pair_url: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub image_id: u64,
    pub name: String,
    /// Verdict under the report threshold.
    pub verdict: VerdictKind,
    /// Verdict recorded at ingest under the session threshold.
    pub stored_verdict: VerdictKind,
    pub score: Score,
    pub best_match_id: Option<u64>,
    pub label: Option<String>,
    pub image_url: String,
    pub pair_url: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub novel: u64,
    pub similar: u64,
}

/// Session history re-thresholded from stored scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub threshold: Score,
    pub session_threshold: Score,
    pub canonical_dims: Option<[u32; 2]>,
    pub counts: VerdictCounts,
    pub entries: Vec<ReportEntry>,
}

fn pair_url(session: &str, image_id: u64) -> String {
    format!("/sessions/{session}/pairs/{image_id}")
}

fn image_url(session: &str, image_id: u64) -> String {
    format!("/sessions/{session}/images/{image_id}")
}

/// Rebuilds verdicts at `threshold` from a manifest. The first image has no
/// match and stays novel at any threshold.
pub fn build_report(session_id: &str, manifest: &Manifest, threshold: Score) -> SessionReport {
    let mut counts = VerdictCounts::default();
    let entries = manifest
        .entries
        .iter()
        .map(|r| {
            let verdict = match r.best_match_id {
                Some(_) if r.score >= threshold => VerdictKind::Similar,
                _ => VerdictKind::Novel,
            };
            match verdict {
                VerdictKind::Novel => counts.novel += 1,
                VerdictKind::Similar => counts.similar += 1,
            }
            ReportEntry {
                image_id: r.id,
                name: r.name.clone(),
                verdict,
                stored_verdict: r.verdict,
                score: r.score,
                best_match_id: r.best_match_id,
                label: r.label.clone(),
                image_url: image_url(session_id, r.id),
                pair_url: r.best_match_id.map(|_| pair_url(session_id, r.id)),
            }
        })
        .collect();
    SessionReport {
        session_id: session_id.to_string(),
        threshold,
        session_threshold: manifest.threshold.score(),
        canonical_dims: manifest.canonical_dims,
        counts,
        entries,
    }
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid session request: {e}")))?
    };
    let config = req.to_config(state.config().parallel)?;
    let session = Session::new(config);
    let id = session.id().to_string();
    let dir = state.config().root.join(&id);
    let save_dir = dir.clone();
    let session = spawn_blocking(move || session.save(&save_dir).map(|_| session)).await??;
    state.insert(Slot::new(id.clone(), dir, session));
    let created = SessionCreated {
        session_id: id,
        threshold: config.threshold.score(),
        level: config.profile.level(),
    };
    Ok((StatusCode::CREATED, Json(created)))
}

/// Image bytes and an optional client-side file name, from either a raw body
/// or the first file part of a multipart form.
async fn read_payload(req: Request) -> Result<(Bytes, Option<String>), ApiError> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?
        {
            if field.file_name().is_some() || field.name() == Some("image") {
                let name = field.file_name().map(str::to_string);
                let data = field.bytes().await.map_err(|e| ApiError::BadRequest(e.body_text()))?;
                return Ok((data, name));
            }
        }
        return Err(ApiError::BadRequest("multipart form has no image part".into()));
    }
    let name = req
        .headers()
        .get("x-filename")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let data = axum::body::to_bytes(req.into_body(), BODY_LIMIT)
        .await
        .map_err(|_| ApiError::TooLarge(BODY_LIMIT))?;
    Ok((data, name))
}

async fn post_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Request,
) -> Result<Json<ApiVerdict>, ApiError> {
    let started = Instant::now();
    let slot = state.slot(&id).await?;
    let (bytes, name) = read_payload(req).await?;
    let image = spawn_blocking(move || decode(&bytes, FormatHint::Detect)).await??;

    let guard = slot.session.clone().lock_owned().await;
    let dir = slot.dir.clone();
    let (outcome, manifest) = spawn_blocking(move || -> Result<_, ApiError> {
        let mut session = guard;
        let name = name.unwrap_or_else(|| format!("upload-{:04}", session.len() + 1));
        let image = session.conform(image)?;
        let outcome = session.ingest(image, name)?;
        if let Some(joint) = &outcome.joint {
            let path = pair_path(&dir, outcome.id);
            let parent = path.parent().expect("pair path has a parent");
            std::fs::create_dir_all(parent).map_err(|e| ApiError::Internal(format!("{}: {e}", parent.display())))?;
            std::fs::write(&path, joint.image.to_png())
                .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
        }
        session.save(&dir)?;
        Ok((outcome, session.manifest()))
    })
    .await??;
    *slot.published.write().expect("snapshot lock poisoned") = Arc::new(manifest);

    Ok(Json(ApiVerdict {
        image_id: outcome.id,
        verdict: outcome.verdict.kind,
        score: outcome.verdict.score,
        best_match_id: outcome.verdict.best_match,
        pair_url: outcome.verdict.best_match.map(|_| pair_url(&slot.id, outcome.id)),
        elapsed_ms: started.elapsed().as_millis() as u64,
    }))
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Json<SessionReport>, ApiError> {
    let slot = state.slot(&id).await?;
    let manifest = slot.snapshot();
    let threshold = match q.threshold {
        // what-if thresholds may reach 100, where only exact duplicates stay similar
        Some(t) if (0.0..=100.0).contains(&t) => Score::from_percent(t),
        Some(t) => return Err(ApiError::BadRequest(format!("threshold must lie in [0, 100], got {t}"))),
        None => manifest.threshold.score(),
    };
    Ok(Json(build_report(&slot.id, &manifest, threshold)))
}

async fn read_png(path: PathBuf) -> Result<impl IntoResponse, ApiError> {
    let shown = path.display().to_string();
    let bytes = spawn_blocking(move || std::fs::read(path))
        .await?
        .map_err(|_| ApiError::NotFound(format!("{shown} is missing")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}

async fn get_pair(
    State(state): State<AppState>,
    Path((id, image_id)): Path<(String, u64)>,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id).await?;
    let manifest = slot.snapshot();
    let entry = image_id
        .checked_sub(1)
        .and_then(|i| manifest.entries.get(i as usize))
        .ok_or_else(|| ApiError::NotFound(format!("no image {image_id} in session {id}")))?;
    if entry.best_match_id.is_none() {
        return Err(ApiError::NotFound(format!("image {image_id} had no match")));
    }
    read_png(pair_path(&slot.dir, image_id)).await
}

async fn get_image(
    State(state): State<AppState>,
    Path((id, image_id)): Path<(String, u64)>,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id).await?;
    if image_id == 0 || image_id > slot.snapshot().entries.len() as u64 {
        return Err(ApiError::NotFound(format!("no image {image_id} in session {id}")));
    }
    read_png(image_path(&slot.dir, image_id)).await
}

pub fn router(state: AppState) -> Router {
    let ui = state.config().ui_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/images", post(post_image))
        .route("/sessions/{id}/images/{image_id}", get(get_image))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/pairs/{image_id}", get(get_pair))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.root)?;
    axum::serve(listener, router(AppState::new(config))).await
}
