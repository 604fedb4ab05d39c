//! HTTP API consumed by the review UI.
//!
//! | route | reply |
//! |---|---|
//! | `GET /api/views` | every view with its status, live decision and flags |
//! | `GET /api/views/{id}/frames/{k}` | member `k` resampled into the reference frame, PNG |
//! | `GET /api/views/{id}/overlay/{k}` | absolute difference to the reference, PNG |
//! | `POST /api/views/{id}/decision` | `{verdict, reason, reviewer}`, appended to the manifest |

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use patchfoundry_core::geom::ViewStatus;
use patchfoundry_core::GrayImage;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::imageio::encode_png;
use crate::layout::find_camera;
use crate::manifest::{Manifest, PruneDecision, Record, Verdict};
use crate::records::{read_jsonl, ViewRecord};
use crate::review::{read_flags, ViewFlags};
use crate::stage::{artifact, warp_member, Stage};

pub struct AppState {
    cfg: PipelineConfig,
    views: Vec<ViewRecord>,
    flags: Vec<ViewFlags>,
    manifest: Mutex<Manifest>,
}

impl AppState {
    /// Loads the view records and the manifest under `cfg.output_root`.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let out = cfg.output_root.as_path();
        let manifest = Manifest::open(out)?;
        manifest
            .latest_stage(Stage::Register.name())
            .context("the register stage has not run")?;
        // registered output first, then views the earlier stages already rejected
        let mut views: Vec<ViewRecord> =
            read_jsonl(&out.join(artifact(Stage::Register, "views.jsonl")))?;
        let clustered: Vec<ViewRecord> = read_jsonl(&out.join(artifact(Stage::Views, "views.jsonl")))?;
        for v in clustered {
            if !views.iter().any(|r| r.view_id == v.view_id) {
                views.push(v);
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            views,
            flags: read_flags(out)?,
            manifest: Mutex::new(manifest),
        })
    }

    fn view(&self, id: &str) -> Result<&ViewRecord, ApiError> {
        self.views
            .iter()
            .find(|v| v.view_id == id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown view {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Serialize)]
struct ViewSummary<'a> {
    view_id: &'a str,
    camera_id: &'a str,
    reference: &'a str,
    status: &'a str,
    n_members: usize,
    reasons: &'a [String],
    decision: Option<DecisionSummary>,
    flags: Vec<String>,
}

#[derive(Debug, Serialize)]
struct DecisionSummary {
    verdict: &'static str,
    reason: String,
    reviewer: String,
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    verdict: String,
    #[serde(default)]
    reason: String,
    #[serde(default)]
    reviewer: String,
}

async fn list_views(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let manifest = st.manifest.lock().map_err(ApiError::internal)?;
    let rows: Vec<ViewSummary<'_>> = st
        .views
        .iter()
        .map(|v| ViewSummary {
            view_id: &v.view_id,
            camera_id: &v.camera_id,
            reference: &v.reference,
            status: &v.status,
            n_members: v.members.len(),
            reasons: &v.reasons,
            decision: manifest.live_decision(&v.view_id).map(|d| DecisionSummary {
                verdict: d.verdict.as_str(),
                reason: d.reason.clone(),
                reviewer: d.reviewer.clone(),
            }),
            flags: st
                .flags
                .iter()
                .find(|f| f.view_id == v.view_id)
                .map(|f| f.flags.clone())
                .unwrap_or_default(),
        })
        .collect();
    Ok(Json(rows).into_response())
}

/// Member `k` and the reference, both in reference coordinates.
fn render(st: &AppState, id: &str, k: usize, overlay: bool) -> Result<Vec<u8>, ApiError> {
    let rec = st.view(id)?;
    let member = rec.members.get(k).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("view {id} has {} members, no member {k}", rec.members.len()),
        )
    })?;
    let view = rec.to_view().map_err(ApiError::internal)?;
    let cam = find_camera(&st.cfg.input_root, &rec.camera_id).map_err(ApiError::internal)?;
    let reference = cam.load_image(&rec.reference).map_err(ApiError::internal)?;
    let (w, h) = (reference.width(), reference.height());
    let img = cam.load_image(&member.image_id).map_err(ApiError::internal)?;
    let (warped, valid) =
        warp_member(&img, &view.members[k].homography, w, h).map_err(ApiError::internal)?;
    let out = if overlay {
        GrayImage::from_fn(w, h, |x, y| {
            if valid.is_valid(x, y) {
                (warped.get(x, y) - reference.get(x, y)).abs()
            } else {
                0.0
            }
        })
    } else {
        warped
    };
    encode_png(&out).map_err(ApiError::internal)
}

async fn image_route(st: Arc<AppState>, id: String, k: usize, overlay: bool) -> Result<Response, ApiError> {
    let png = tokio::task::spawn_blocking(move || render(&st, &id, k, overlay))
        .await
        .map_err(ApiError::internal)??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn frame(
    State(st): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    image_route(st, id, k, false).await
}

async fn overlay(
    State(st): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    image_route(st, id, k, true).await
}

async fn decide(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let rec = st.view(&id)?;
    let parsed: DecisionBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?;
    let verdict = Verdict::parse(&parsed.verdict).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("verdict must be accept or reject, got {:?}", parsed.verdict),
        )
    })?;
    if rec.status != ViewStatus::Registered.as_str() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("view {id} is {}, only registered views can be decided", rec.status),
        ));
    }
    let decision = PruneDecision::new(&id, verdict, &parsed.reason, &parsed.reviewer);
    let st2 = Arc::clone(&st);
    tokio::task::spawn_blocking(move || {
        let mut m = st2.manifest.lock().map_err(ApiError::internal)?;
        m.append(Record::Decision(decision)).map_err(ApiError::internal)
    })
    .await
    .map_err(ApiError::internal)??;
    log::info!("decision {id}: {}", verdict.as_str());
    Ok((
        StatusCode::OK,
        Json(serde_json::json!({ "view_id": id, "verdict": verdict.as_str() })),
    )
        .into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/views", get(list_views))
        .route("/api/views/{id}/frames/{k}", get(frame))
        .route("/api/views/{id}/overlay/{k}", get(overlay))
        .route("/api/views/{id}/decision", post(decide))
        .with_state(state)
}

/// A server running on its own thread, stopped on [`ServerHandle::stop`] or drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) -> Result<()> {
        self.halt()
    }

    fn halt(&mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| anyhow::anyhow!("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.halt();
    }
}

/// Starts the API on `addr` (port 0 picks a free port) in a background thread.
pub fn spawn(cfg: &PipelineConfig, addr: SocketAddr) -> Result<ServerHandle> {
    let state = Arc::new(AppState::load(cfg)?);
    let listener = std::net::TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || -> Result<()> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await?;
            Ok(())
        })
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves the API on `addr` until ctrl-c.
pub async fn serve(cfg: &PipelineConfig, addr: SocketAddr) -> Result<()> {
    let state = Arc::new(AppState::load(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("review API on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
