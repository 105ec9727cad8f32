//! HTTP front of the manager, and the per-sensor endpoint that receives
//! forwarded kind-specific primitives.

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::descriptor::SensorDescriptor;
use crate::lifecycle::Lifecycle;
use crate::manager::{AcquisitionManager, Command, ManagerError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub descriptor: SensorDescriptor,
    pub endpoint: String,
    #[serde(default)]
    pub specific_primitives: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub token: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeartbeatRequest {
    pub token: String,
    pub lifecycle: Lifecycle,
    #[serde(default)]
    pub bytes_written: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimitiveRequest {
    pub command: Command,
}

/// Delivers a kind-specific primitive to a sensor endpoint.
#[async_trait]
pub trait Forwarder: Send + Sync {
    async fn forward(&self, endpoint: &str, name: &str, args: Value) -> Result<Value, String>;
}

/// POSTs to `{endpoint}/primitive/{name}`.
#[derive(Clone, Default)]
pub struct HttpForwarder(reqwest::Client);

#[async_trait]
impl Forwarder for HttpForwarder {
    async fn forward(&self, endpoint: &str, name: &str, args: Value) -> Result<Value, String> {
        let url = format!("{}/primitive/{name}", endpoint.trim_end_matches('/'));
        let resp = self.0.post(&url).json(&args).send().await.map_err(|e| e.to_string())?;
        let status = resp.status();
        let body: Value = resp.json().await.map_err(|e| e.to_string())?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(format!("{url}: {status}: {body}"))
        }
    }
}

#[derive(Clone)]
pub struct ManagerState {
    pub manager: Arc<AcquisitionManager>,
    pub forwarder: Arc<dyn Forwarder>,
}

pub fn status_of(e: &ManagerError) -> StatusCode {
    match e {
        ManagerError::Conflict(_) | ManagerError::NotDeclared { .. } | ManagerError::IllegalTransition { .. } => {
            StatusCode::CONFLICT
        }
        ManagerError::Unauthorized => StatusCode::UNAUTHORIZED,
        ManagerError::NotFound(_) => StatusCode::NOT_FOUND,
        ManagerError::Invalid(_) => StatusCode::BAD_REQUEST,
    }
}

fn error(e: ManagerError) -> Response {
    (status_of(&e), Json(json!({ "error": e.to_string() }))).into_response()
}

async fn register(State(s): State<ManagerState>, Json(req): Json<RegisterRequest>) -> Response {
    match s.manager.register(req.descriptor, req.endpoint, req.specific_primitives) {
        Ok(token) => (StatusCode::CREATED, Json(RegisterResponse { token })).into_response(),
        Err(e) => error(e),
    }
}

async fn unregister(State(s): State<ManagerState>, Path(token): Path<String>) -> Response {
    match s.manager.unregister(&token) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(e),
    }
}

async fn heartbeat(State(s): State<ManagerState>, Json(req): Json<HeartbeatRequest>) -> Response {
    match s.manager.heartbeat(&req.token, req.lifecycle, req.bytes_written) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => error(e),
    }
}

async fn fleet(State(s): State<ManagerState>) -> Response {
    Json(s.manager.fleet()).into_response()
}

async fn primitive(State(s): State<ManagerState>, Json(req): Json<PrimitiveRequest>) -> Response {
    let out = s.manager.broadcast(req.command);
    let code = if out.accepted { StatusCode::OK } else { StatusCode::CONFLICT };
    (code, Json(out)).into_response()
}

async fn sensor_primitive(
    State(s): State<ManagerState>,
    Path((id, name)): Path<(String, String)>,
    body: Option<Json<Value>>,
) -> Response {
    let endpoint = match s.manager.resolve_primitive(&id, &name) {
        Ok(ep) => ep,
        Err(e) => return error(e),
    };
    let args = body.map_or(Value::Null, |Json(v)| v);
    match s.forwarder.forward(&endpoint, &name, args).await {
        Ok(v) => Json(json!({ "sensor": id, "primitive": name, "result": v })).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, Json(json!({ "error": e }))).into_response(),
    }
}

/// Wire name of a serialised enum.
fn wire<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

async fn status_page(State(s): State<ManagerState>) -> Html<String> {
    let f = s.manager.fleet();
    let mut rows = String::new();
    for e in &f.sensors {
        rows += &format!(
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.3}</td><td>{}</td><td>{}</td></tr>\n",
            escape(&e.descriptor.id),
            wire(&e.descriptor.kind),
            wire(&e.state.lifecycle),
            if e.stale { "STALE" } else { "ok" },
            e.descriptor.declared_rate() / 1e6,
            e.state.bytes_written,
            escape(e.state.current_session.as_deref().unwrap_or("-")),
        );
    }
    Html(format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><meta http-equiv=\"refresh\" content=\"2\">\
         <title>Acquisition fleet</title></head><body>\n<h1>Acquisition fleet</h1>\n\
         <p>Declared {:.1} MB/s of {:.1} MB/s disk budget.</p>\n\
         <table border=\"1\"><tr><th>sensor</th><th>kind</th><th>state</th><th>liveness</th><th>MB/s</th>\
         <th>bytes</th><th>session</th></tr>\n{rows}</table>\n</body></html>\n",
        f.declared_total_bps / 1e6,
        f.disk_budget_bps / 1e6,
    ))
}

pub fn manager_router(state: ManagerState) -> Router {
    Router::new()
        .route("/", get(status_page))
        .route("/register", post(register))
        .route("/register/{token}", delete(unregister))
        .route("/heartbeat", post(heartbeat))
        .route("/fleet", get(fleet))
        .route("/primitive", post(primitive))
        .route("/sensor/{id}/primitive/{name}", post(sensor_primitive))
        .with_state(state)
}

/// Sensor-side endpoint: applies declared primitives and remembers them.
pub struct SensorEndpoint {
    pub id: String,
    pub declared: Vec<String>,
    pub applied: Mutex<Vec<(String, Value)>>,
}

impl SensorEndpoint {
    pub fn new(id: impl Into<String>, declared: Vec<String>) -> Arc<Self> {
        Arc::new(Self {
            id: id.into(),
            declared,
            applied: Mutex::new(Vec::new()),
        })
    }
}

async fn apply(State(ep): State<Arc<SensorEndpoint>>, Path(name): Path<String>, body: Option<Json<Value>>) -> Response {
    if !ep.declared.contains(&name) {
        let msg = format!("sensor `{}` has no primitive `{name}`", ep.id);
        return (StatusCode::NOT_FOUND, Json(json!({ "error": msg }))).into_response();
    }
    let args = body.map_or(Value::Null, |Json(v)| v);
    ep.applied.lock().unwrap_or_else(|p| p.into_inner()).push((name.clone(), args.clone()));
    Json(json!({ "sensor": ep.id, "applied": name, "args": args })).into_response()
}

pub fn sensor_router(ep: Arc<SensorEndpoint>) -> Router {
    Router::new().route("/primitive/{name}", post(apply)).with_state(ep)
}
