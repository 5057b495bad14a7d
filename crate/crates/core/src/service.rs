//! Session-oriented HTTP service for the interactive draw, predict, redraw loop.
//!
//! Drawings arrive as black-on-white PNGs at the canvas resolution together with
//! the catalog viewpoint they were drawn from. Every accepted drawing bumps the
//! session version and re-predicts the shape from all of the session's views.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse, update_once, Predictor, View, DEFAULT_ITERATIONS};
use crate::geometry::{extract_mesh, raycast_preview, viewpoint_camera, Frame, ViewpointId, WorldGrid, DISTANCE_PER_EXTENT};
use crate::render::LineDrawing;

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    /// Maximum number of live sessions.
    pub capacity: usize,
    /// Side of the square drawings clients submit.
    pub canvas: usize,
    /// Resolution of the stored world grid.
    pub grid_resolution: usize,
    /// Working volume all catalog cameras look at.
    pub frame: Frame,
    pub iterations: usize,
    /// Apply one updater pass for the new drawing instead of a full re-fusion.
    pub incremental: bool,
    /// Side of preview images.
    pub preview_size: usize,
}

impl ServiceConfig {
    pub fn new(canvas: usize, grid_resolution: usize) -> Self {
        ServiceConfig {
            capacity: 64,
            canvas,
            grid_resolution,
            frame: Frame::new([0.0; 3], 1.0).expect("unit frame"),
            iterations: DEFAULT_ITERATIONS,
            incremental: false,
            preview_size: 256,
        }
    }
}

/// A drawing as accepted by a session.
#[derive(Clone, Debug, PartialEq)]
pub struct Submission {
    pub viewpoint: ViewpointId,
    pub drawing: LineDrawing,
}

#[derive(Debug, Default)]
pub struct Session {
    /// Every accepted submission, in order, including replaced ones.
    history: Vec<Submission>,
    grid: Option<WorldGrid>,
    version: u64,
}

impl Session {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn grid(&self) -> Option<&WorldGrid> {
        self.grid.as_ref()
    }

    pub fn history(&self) -> &[Submission] {
        &self.history
    }

    /// Current views in first-submission order; a later drawing for the same
    /// viewpoint replaces the earlier one in place.
    pub fn views(&self) -> Vec<Submission> {
        current_views(&self.history)
    }
}

fn current_views(history: &[Submission]) -> Vec<Submission> {
    let mut out: Vec<Submission> = Vec::new();
    for s in history {
        match out.iter_mut().find(|v| v.viewpoint == s.viewpoint) {
            Some(slot) => slot.drawing = s.drawing.clone(),
            None => out.push(s.clone()),
        }
    }
    out
}

fn to_view(s: &Submission, frame: &Frame, size: usize) -> View {
    View {
        drawing: s.drawing.resized(size, size),
        camera: viewpoint_camera(s.viewpoint, frame),
        viewpoint: Some(s.viewpoint),
    }
}

/// Engine state after the submissions in `history`, computed from scratch
/// exactly as a session computes it.
pub fn replay(predictor: &Predictor, config: &ServiceConfig, history: &[Submission]) -> Result<WorldGrid> {
    let mut grid = None;
    for k in 1..=history.len() {
        grid = Some(step(predictor, config, &history[..k], grid.as_ref())?);
    }
    grid.ok_or(Error::NoPrediction)
}

fn step(predictor: &Predictor, config: &ServiceConfig, history: &[Submission], previous: Option<&WorldGrid>) -> Result<WorldGrid> {
    let size = predictor.drawing_size();
    let (frame, n) = (&config.frame, config.grid_resolution);
    match previous {
        Some(grid) if config.incremental => {
            let last = history.last().expect("nonempty history");
            update_once(&predictor.updater, grid, &to_view(last, frame, size), 1.0)
        }
        _ => {
            let views: Vec<View> = current_views(history).iter().map(|s| to_view(s, frame, size)).collect();
            let iterations = if views.len() == 1 { 0 } else { config.iterations };
            Ok(fuse(predictor, &views, iterations, frame, n, None)?.0)
        }
    }
}

/// Live sessions sharing one immutable predictor.
pub struct SessionStore {
    predictor: Arc<Predictor>,
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn new(predictor: Arc<Predictor>, config: ServiceConfig) -> Self {
        SessionStore { predictor, config, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self) -> Result<String> {
        let mut map = self.sessions.lock().expect("session map");
        if map.len() >= self.config.capacity {
            return Err(Error::Capacity(self.config.capacity));
        }
        let mut rng = rand::rng();
        let id = loop {
            let id = format!("{:016x}", rng.random::<u64>());
            if !map.contains_key(&id) {
                break id;
            }
        };
        map.insert(id.clone(), Arc::new(Mutex::new(Session::default())));
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("session map").get(id).cloned().ok_or_else(|| Error::UnknownSession(id.into()))
    }

    pub fn close(&self, id: &str) -> Result<()> {
        self.sessions.lock().expect("session map").remove(id).map(|_| ()).ok_or_else(|| Error::UnknownSession(id.into()))
    }

    /// Validates and applies a drawing, returning the new version. Submissions
    /// to one session are serialized by its lock.
    pub fn submit(&self, id: &str, drawing: LineDrawing, viewpoint: u32) -> Result<u64> {
        let viewpoint = ViewpointId::new(viewpoint)?;
        let c = self.config.canvas;
        if drawing.width != c || drawing.height != c {
            return Err(Error::Rejected(format!("drawing is {}x{}, the canvas is {c}x{c}", drawing.width, drawing.height)));
        }
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        if session.history.is_empty() && !viewpoint.is_corner() {
            return Err(Error::Rejected(format!(
                "the first drawing must come from a 3/4 corner view (ids 0-7), got {viewpoint} ({})",
                viewpoint.label()
            )));
        }
        let mut history = session.history.clone();
        history.push(Submission { viewpoint, drawing });
        let grid = step(&self.predictor, &self.config, &history, session.grid.as_ref())?;
        session.history = history;
        session.grid = Some(grid);
        session.version += 1;
        Ok(session.version)
    }

    /// Current grid and version of a session.
    pub fn prediction(&self, id: &str) -> Result<(WorldGrid, u64)> {
        let handle = self.session(id)?;
        let session = handle.lock().expect("session lock");
        let grid = session.grid.clone().ok_or(Error::NoPrediction)?;
        Ok((grid, session.version))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewpointInfo {
    pub id: u32,
    pub label: String,
    pub corner: bool,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
}

/// The 13 catalog viewpoints with their cameras for `frame`.
pub fn list_viewpoints(frame: &Frame) -> Vec<ViewpointInfo> {
    ViewpointId::all()
        .map(|id| {
            let cam = viewpoint_camera(id, frame);
            let v = |p: crate::geometry::Vec3| [p.x, p.y, p.z];
            ViewpointInfo {
                id: id.get(),
                label: id.label().into(),
                corner: id.is_corner(),
                eye: v(cam.eye()),
                target: v(cam.target()),
                up: cam.up,
                fov_deg: cam.fov_deg,
            }
        })
        .collect()
}

/// Camera distance of every catalog viewpoint for `frame`.
pub fn catalog_distance(frame: &Frame) -> f64 {
    DISTANCE_PER_EXTENT * frame.extent as f64
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub version: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub version: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Deserialize)]
pub struct DrawingQuery {
    pub view: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Voxels,
    Mesh,
    Preview,
}

#[derive(Debug, Deserialize)]
pub struct PredictionQuery {
    pub format: Format,
    pub view: Option<u32>,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::UnknownSession(_) => StatusCode::NOT_FOUND,
            Error::NoPrediction => StatusCode::CONFLICT,
            Error::Capacity(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::EmptyLevelSet(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Rejected(_) | Error::InvalidViewpoint(_) | Error::Format { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut resp = (status, Json(ErrorBody { error: self.0.to_string() })).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("5"));
        }
        resp
    }
}

type Shared = Arc<SessionStore>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(Error::Io(std::io::Error::other(e)))),
    }
}

async fn create_session(State(store): State<Shared>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let id = store.create()?;
    log::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(SessionCreated { id, version: 0 })))
}

async fn submit_drawing(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<DrawingQuery>,
    body: Bytes,
) -> Result<Json<Submitted>, ApiError> {
    let drawing = LineDrawing::read_png(&body[..])?;
    let version = blocking(move || store.submit(&id, drawing, q.view)).await?;
    Ok(Json(Submitted { version }))
}

async fn get_prediction(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PredictionQuery>,
) -> Result<Response, ApiError> {
    blocking(move || {
        let (grid, version) = store.prediction(&id)?;
        let (body, kind): (Vec<u8>, &str) = match q.format {
            Format::Voxels => (grid.to_vxg_bytes(), "application/octet-stream"),
            Format::Mesh => (extract_mesh(&grid, 0.5)?.to_obj_string().into_bytes(), "text/plain"),
            Format::Preview => {
                let cam = viewpoint_camera(ViewpointId::new(q.view.unwrap_or(0))?, &store.config.frame);
                let size = store.config.preview_size;
                let mut png = Vec::new();
                raycast_preview(&grid, &cam, size, size, 0.5).write_png(&mut png)?;
                (png, "image/png")
            }
        };
        let mut resp = (StatusCode::OK, body).into_response();
        resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(kind));
        resp.headers_mut().insert("x-prediction-version", HeaderValue::from(version));
        Ok(resp)
    })
    .await
}

async fn viewpoints(State(store): State<Shared>) -> Json<Vec<ViewpointInfo>> {
    Json(list_viewpoints(&store.config.frame))
}

async fn close_session(State(store): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    store.close(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", delete(close_session))
        .route("/sessions/{id}/drawings", post(submit_drawing))
        .route("/sessions/{id}/prediction", get(get_prediction))
        .route("/viewpoints", get(viewpoints))
        .with_state(store)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(store: Shared, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Network, NetworkSpec};

    fn tiny_predictor() -> Arc<Predictor> {
        let spec = NetworkSpec::toy();
        let single = Network::new(spec.clone(), 1).unwrap();
        let updater = Network::new(spec.with_updater(true), 2).unwrap();
        Arc::new(Predictor::new(single, updater).unwrap())
    }

    fn square(size: usize) -> LineDrawing {
        let mut d = LineDrawing::blank(size, size);
        for i in size / 4..3 * size / 4 {
            for j in [size / 4, 3 * size / 4] {
                d.ink[j * size + i] = 1.0;
                d.ink[i * size + j] = 1.0;
            }
        }
        d
    }

    #[test]
    fn views_replace_in_place() {
        let a = |v: u32, x: f32| Submission { viewpoint: ViewpointId::new(v).unwrap(), drawing: LineDrawing::from_ink(1, 1, vec![x]).unwrap() };
        let views = current_views(&[a(0, 0.0), a(10, 0.0), a(0, 1.0)]);
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].viewpoint.get(), 0);
        assert_eq!(views[0].drawing.ink, vec![1.0]);
    }

    #[test]
    fn store_contracts() {
        let store = SessionStore::new(tiny_predictor(), ServiceConfig { capacity: 2, iterations: 1, ..ServiceConfig::new(64, 8) });
        let a = store.create().unwrap();
        let b = store.create().unwrap();
        assert_ne!(a, b);
        assert!(matches!(store.create(), Err(Error::Capacity(2))));
        assert!(matches!(store.prediction(&a), Err(Error::NoPrediction)));
        assert!(matches!(store.submit(&a, square(64), 10), Err(Error::Rejected(_))));
        assert!(matches!(store.submit(&a, square(32), 0), Err(Error::Rejected(_))));
        assert!(matches!(store.submit(&a, square(64), 13), Err(Error::InvalidViewpoint(13))));
        assert_eq!(store.submit(&a, square(64), 0).unwrap(), 1);
        assert_eq!(store.submit(&a, square(64), 10).unwrap(), 2);
        assert_eq!(store.session(&a).unwrap().lock().unwrap().views().len(), 2);
        store.close(&b).unwrap();
        assert!(matches!(store.close(&b), Err(Error::UnknownSession(_))));
        store.create().unwrap();
    }

    #[test]
    fn incremental_mode_matches_replay() {
        let config = ServiceConfig { incremental: true, ..ServiceConfig::new(64, 8) };
        let store = SessionStore::new(tiny_predictor(), config.clone());
        let id = store.create().unwrap();
        for v in [3, 12, 3] {
            store.submit(&id, square(64), v).unwrap();
        }
        let session = store.session(&id).unwrap();
        let s = session.lock().unwrap();
        assert_eq!(s.history().len(), 3);
        assert_eq!(s.grid().unwrap(), &replay(store.predictor(), &config, s.history()).unwrap());
    }

    #[test]
    fn catalog_has_thirteen_constant_distance_cameras() {
        let frame = Frame::new([0.5, 0.5, 0.5], 1.2).unwrap();
        let list = list_viewpoints(&frame);
        assert_eq!(list.len(), 13);
        for (i, v) in list.iter().enumerate() {
            assert_eq!(v.id as usize, i);
            assert_eq!(v.corner, i < 8);
            let d: f64 = (0..3).map(|a| (v.eye[a] - v.target[a]).powi(2)).sum::<f64>().sqrt();
            assert!((d - catalog_distance(&frame)).abs() < 1e-9);
        }
    }
}
