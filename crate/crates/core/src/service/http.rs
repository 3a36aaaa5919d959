use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::session::{Action, ControlRequest, ServiceError, SessionManager, Speed};
use crate::metrics::{export, ExportFormat};
use crate::model::SimulationConfig;

pub type AppState = Arc<SessionManager>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::WrongSessionState { .. } => StatusCode::CONFLICT,
            ServiceError::ValidationFailed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        if let ServiceError::ValidationFailed(issues) = &self {
            body["issues"] = json!(issues);
        }
        (status, Json(body)).into_response()
    }
}

fn bad_request(msg: impl std::fmt::Display) -> ServiceError {
    ServiceError::InvalidConfig(msg.to_string())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/workload", put(load_workload))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/eet", patch(update_eet))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Binds, spawns the idle sweeper and serves until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    let sweeper = Arc::downgrade(&state);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            match sweeper.upgrade() {
                Some(m) => {
                    m.expire_idle();
                }
                None => break,
            }
        }
    });
    axum::serve(listener, router(state)).await
}

/// Starts a server on `addr` in the background and returns the bound address.
pub async fn spawn(addr: SocketAddr, state: AppState) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, state).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok(local)
}

async fn create_session(State(state): State<AppState>, body: axum::body::Bytes) -> Result<impl IntoResponse, ServiceError> {
    let config: SimulationConfig = serde_json::from_slice(&body).map_err(bad_request)?;
    let id = state.create(config)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn load_workload(
    State(state): State<AppState>,
    Path(id): Path<String>,
    mut form: Multipart,
) -> Result<impl IntoResponse, ServiceError> {
    let (mut eet, mut trace) = (None, None);
    while let Some(field) = form.next_field().await.map_err(bad_request)? {
        let key = field
            .name()
            .or(field.file_name())
            .unwrap_or_default()
            .trim_end_matches(".csv")
            .to_ascii_lowercase();
        let bytes = field.bytes().await.map_err(bad_request)?;
        match key.as_str() {
            "eet" => eet = Some(bytes),
            "trace" => trace = Some(bytes),
            _ => {}
        }
    }
    let (Some(eet), Some(trace)) = (eet, trace) else {
        return Err(ServiceError::ValidationFailed(vec!["expected multipart fields `eet` and `trace`".into()]));
    };
    let ack = state.with(&id, |s| s.load_workload(&eet, &trace))?;
    Ok(Json(ack))
}

async fn control(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let req: ControlRequest = serde_json::from_slice(&body).map_err(bad_request)?;
    let action = req.parse()?;
    let handle = state.get(&id)?;
    let ack = {
        let handle = handle.clone();
        tokio::task::spawn_blocking(move || handle.lock().expect("session poisoned").control(action))
            .await
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))??
    };
    if let Action::Run(Speed::EventsPerSecond(rate)) = action {
        let generation = handle.lock().expect("session poisoned").generation();
        let period = Duration::from_secs_f64(1.0 / rate);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            tick.tick().await;
            loop {
                tick.tick().await;
                let more = handle.lock().expect("session poisoned").advance(generation);
                match more {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => {
                        log::error!("paced run failed: {e}");
                        break;
                    }
                }
            }
        });
    }
    Ok(Json(ack))
}

#[derive(Debug, Deserialize)]
struct EetEdit {
    task_type: String,
    machine_type: String,
    value: f64,
}

async fn update_eet(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let edit: EetEdit = serde_json::from_slice(&body).map_err(bad_request)?;
    let ack = state.with(&id, |s| s.update_eet_cell(&edit.task_type, &edit.machine_type, edit.value))?;
    Ok(Json(ack))
}

async fn snapshot(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(state.with(&id, |s| Ok(s.snapshot()))?))
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let report = state.with(&id, |s| s.report())?;
    let bytes = export(&report, ExportFormat::Json);
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes))
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<impl IntoResponse, ServiceError> {
    let rx = state.with(&id, |s| Ok(s.subscribe()))?;
    Ok(ws.on_upgrade(move |socket| forward(socket, rx)))
}

async fn forward(mut socket: WebSocket, mut rx: tokio::sync::mpsc::UnboundedReceiver<super::session::Delta>) {
    while let Some(delta) = rx.recv().await {
        let text = serde_json::to_string(&delta).expect("delta serializes");
        if socket.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
