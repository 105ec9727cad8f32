//! Read-only HTTP access to session bundles, and the combined server that
//! also hosts the acquisition manager.

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use gate_acquisition::client::{drive_sensor, ManagerClient};
use gate_acquisition::sensor::SimulatedSensor;
use gate_acquisition::server::{manager_router, sensor_router, HttpForwarder, ManagerState, SensorEndpoint};
use gate_acquisition::sim::Blank;
use gate_acquisition::{portal_fleet, AcquisitionManager, Clock, ManagerConfig, WallClock};
use gate_core::session::{find_tile, list_sessions, parse_manifest, session_dir, SessionManifest, StreamRole, MANIFEST_FILE};
use gate_core::synth::scenario::frame_name;
use gate_core::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Clone)]
pub struct SessionState {
    pub root: Arc<PathBuf>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::OutOfRange(_) | Error::UnknownRole(_) | Error::MissingArtifact(_) => StatusCode::NOT_FOUND,
            Error::Manifest(m) if m.starts_with("invalid session id") => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

type ApiResult = Result<Response, ApiError>;

#[derive(Serialize)]
struct SessionSummary {
    id: String,
    created_us: u64,
    roles: Vec<StreamRole>,
}

fn manifest(root: &FsPath, id: &str) -> Result<(PathBuf, SessionManifest), ApiError> {
    let dir = session_dir(root, id)?;
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| ApiError(StatusCode::NOT_FOUND, format!("no session `{id}`")))?;
    Ok((dir, parse_manifest(&text)?))
}

fn file_response(path: &FsPath, content_type: &'static str) -> ApiResult {
    let bytes = std::fs::read(path).map_err(|_| ApiError(StatusCode::NOT_FOUND, format!("missing {}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

async fn sessions(State(s): State<SessionState>) -> ApiResult {
    if !s.root.is_dir() {
        return Ok(Json(Vec::<Value>::new()).into_response());
    }
    let list: Vec<SessionSummary> = list_sessions(&s.root)?
        .into_iter()
        .map(|m| SessionSummary {
            roles: m.streams.iter().map(|st| st.role).collect(),
            id: m.id,
            created_us: m.created_us,
        })
        .collect();
    Ok(Json(list).into_response())
}

async fn get_manifest(State(s): State<SessionState>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(manifest(&s.root, &id)?.1).into_response())
}

/// `{tx}_{ty}`, optionally with a `.pgm` or `.ppm` suffix.
fn parse_tile(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_suffix(".pgm").or_else(|| name.strip_suffix(".ppm")).unwrap_or(name);
    let (a, b) = stem.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

async fn tile(State(s): State<SessionState>, Path((id, role, level, name)): Path<(String, String, usize, String)>) -> ApiResult {
    let (dir, m) = manifest(&s.root, &id)?;
    let role: StreamRole = role.parse()?;
    let (tx, ty) = parse_tile(&name).ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, format!("bad tile name `{name}`")))?;
    let entry = m.stream(role).ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no {role} stream")))?;
    let pyr = entry
        .pyramid
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("{role} has no pyramid")))?;
    let path = find_tile(&dir.join(&pyr.root), &pyr.info, level, tx, ty)?;
    let ct = if path.extension().is_some_and(|e| e == "ppm") {
        "image/x-portable-pixmap"
    } else {
        "image/x-portable-graymap"
    };
    file_response(&path, ct)
}

async fn thermal_raw(State(s): State<SessionState>, Path((id, side)): Path<(String, String)>) -> ApiResult {
    let (dir, m) = manifest(&s.root, &id)?;
    let role = match side.as_str() {
        "left" => StreamRole::ThermalLeft,
        "right" => StreamRole::ThermalRight,
        _ => return Err(ApiError(StatusCode::NOT_FOUND, format!("no thermal side `{side}`"))),
    };
    let entry = m.stream(role).ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no {role} stream")))?;
    file_response(&dir.join(&entry.path), "application/octet-stream")
}

async fn frontal(State(s): State<SessionState>, Path((id, k)): Path<(String, u64)>) -> ApiResult {
    let (dir, m) = manifest(&s.root, &id)?;
    let entry = m
        .stream(StreamRole::Frontal)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no frontal stream".into()))?;
    if k >= entry.samples {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("frame {k} beyond {}", entry.samples)));
    }
    file_response(&dir.join(&entry.path).join(frame_name(k as usize)), "image/x-portable-graymap")
}

async fn detections(State(s): State<SessionState>, Path(id): Path<String>) -> ApiResult {
    let (dir, m) = manifest(&s.root, &id)?;
    let d = &m.detections;
    let mut out = Map::new();
    for (key, rel) in [("wagon_id", &d.wagon_id), ("thermal", &d.thermal), ("pantograph", &d.pantograph)] {
        let v = match rel {
            Some(rel) => {
                let text = std::fs::read_to_string(dir.join(rel)).map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            }
            None => Value::Null,
        };
        out.insert(key.into(), v);
    }
    Ok(Json(Value::Object(out)).into_response())
}

/// Server-side `time_to_position`, for cross-checking clients.
async fn sync(State(s): State<SessionState>, Path((id, role, t_us)): Path<(String, String, u64)>) -> ApiResult {
    let (_, m) = manifest(&s.root, &id)?;
    let role: StreamRole = role.parse()?;
    let index = m.sync_model()?.time_to_position(role, t_us)?;
    Ok(Json(json!({ "role": role, "t_us": t_us, "index": index })).into_response())
}

pub fn session_router(root: PathBuf) -> Router {
    Router::new()
        .route("/sessions", get(sessions))
        .route("/sessions/{id}/manifest", get(get_manifest))
        .route("/sessions/{id}/tiles/{role}/{level}/{tile}", get(tile))
        .route("/sessions/{id}/thermal/{side}/raw", get(thermal_raw))
        .route("/sessions/{id}/frontal/{k}", get(frontal))
        .route("/sessions/{id}/detections", get(detections))
        .route("/sessions/{id}/sync/{role}/{t_us}", get(sync))
        .with_state(SessionState { root: Arc::new(root) })
}

/// Lets a console served from another origin read the API.
async fn allow_any_origin(mut resp: Response) -> Response {
    resp.headers_mut()
        .insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    resp
}

/// Manager and session service on one listener.
pub fn app(manager: Arc<AcquisitionManager>, sessions_root: PathBuf) -> Router {
    let state = ManagerState {
        manager,
        forwarder: Arc::new(HttpForwarder::default()),
    };
    manager_router(state)
        .merge(session_router(sessions_root))
        .layer(axum::middleware::map_response(allow_any_origin))
}

pub struct ServeOptions {
    pub bind: SocketAddr,
    pub sessions_root: PathBuf,
    pub manager: ManagerConfig,
    /// Runs the five simulated portal sensors against the manager.
    pub simulate: bool,
}

pub async fn serve(opts: ServeOptions) -> std::io::Result<()> {
    let manager = Arc::new(AcquisitionManager::new(Arc::new(WallClock), opts.manager.clone()));
    let listener = tokio::net::TcpListener::bind(opts.bind).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, root = %opts.sessions_root.display(), "serving manager and sessions");
    if opts.simulate {
        let base = format!("http://{local}");
        let period = Duration::from_micros(opts.manager.heartbeat_period_us);
        let declared: f64 = portal_fleet().iter().map(|(d, _)| d.declared_rate()).sum();
        for (d, prims) in portal_fleet() {
            let ep_listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
            let endpoint = format!("http://{}", ep_listener.local_addr()?);
            let router = sensor_router(SensorEndpoint::new(d.id.clone(), prims.clone()));
            tokio::spawn(async move { axum::serve(ep_listener, router).await });
            let share = opts.manager.disk_budget_bps * d.declared_rate() / declared;
            let n = d.sample_bytes();
            let sensor = SimulatedSensor::new(d, Box::new(Blank(n)), share, WallClock.now_us());
            let client = ManagerClient::new(base.clone());
            tokio::spawn(async move {
                let id = sensor.descriptor.id.clone();
                if let Err(e) = drive_sensor(client, endpoint, prims, sensor, WallClock, period, None).await {
                    tracing::warn!(sensor = %id, error = %e, "simulated sensor stopped");
                }
            });
        }
    }
    axum::serve(listener, app(manager, opts.sessions_root))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_names() {
        assert_eq!(parse_tile("3_4"), Some((3, 4)));
        assert_eq!(parse_tile("3_4.ppm"), Some((3, 4)));
        assert_eq!(parse_tile("3-4"), None);
        assert_eq!(parse_tile("_4"), None);
    }
}
