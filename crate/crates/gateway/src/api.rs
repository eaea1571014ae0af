// SPDX-License-Identifier: Apache-2.0

//! HTTP and websocket surface: the robot endpoint, the control API and the
//! detection web service.

use std::time::Instant;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use smartcloud_core::protocol::SessionMode;
use smartcloud_core::registry::Bindings;
use smartcloud_core::webservice::XML_CONTENT_TYPE;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use crate::{Gateway, GatewayError, Outbound, RobotSession};

impl GatewayError {
    pub fn status(&self) -> StatusCode {
        use GatewayError::*;
        match self {
            UnknownRobot(_) | UnknownPackage(_) | UnknownInstance(_) | UnknownStream(_) => {
                StatusCode::NOT_FOUND
            }
            MissingTopic(_) | InvalidBinding(_) | AppInit(_) | App(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            DuplicateRobotId(_) | AlreadyStopped(_) => StatusCode::CONFLICT,
            Handshake(_) | BadFrame(_) | Decode(_) => StatusCode::BAD_REQUEST,
            FrameDropped => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub fn router(gw: Gateway) -> Router {
    Router::new()
        .route("/robot", get(robot_ws))
        .route("/api/robots", get(list_robots))
        .route("/api/robots/:id/packages", get(robot_packages))
        .route("/api/offloads", get(list_offloads).post(start_offload))
        .route("/api/offloads/:id", get(get_offload).delete(stop_offload))
        .route("/api/metrics", get(metrics))
        .route("/api/events", get(events_ws))
        .route("/streams/:id/frames", post(post_frame))
        .route("/streams/:id/latest", get(latest))
        .with_state(gw)
}

pub async fn serve(listener: TcpListener, gw: Gateway) -> std::io::Result<()> {
    axum::serve(listener, router(gw)).await
}

#[derive(Debug, Deserialize)]
struct RobotQuery {
    robot: String,
    #[serde(default)]
    mode: Option<String>,
}

fn parse_mode(mode: Option<&str>) -> Result<SessionMode, GatewayError> {
    match mode {
        None | Some("ros") => Ok(SessionMode::Ros),
        Some("raw") | Some("non_ros") => Ok(SessionMode::NonRos),
        Some(other) => Err(GatewayError::Handshake(format!("unknown mode {other:?}"))),
    }
}

async fn robot_ws(
    State(gw): State<Gateway>,
    Query(q): Query<RobotQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, GatewayError> {
    let mode = parse_mode(q.mode.as_deref())?;
    let session = gw.register_robot(&q.robot, mode)?;
    let robot = session.robot.clone();
    let on_fail = gw.clone();
    Ok(ws
        .on_failed_upgrade(move |e| {
            tracing::warn!(robot = %robot.id(), error = %e, "websocket upgrade failed");
            on_fail.disconnect(&robot);
        })
        .on_upgrade(move |socket| robot_loop(gw, session, socket)))
}

async fn robot_loop(gw: Gateway, session: RobotSession, socket: WebSocket) {
    let RobotSession {
        robot,
        mut outbound,
    } = session;
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(Outbound::Text(text)) = outbound.recv().await {
            if sink.send(Message::Text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(frame) = stream.next().await {
        let received = Instant::now();
        match frame {
            Ok(Message::Text(text)) => {
                if let Err(e) = gw.handle_robot_text(&robot, &text, received) {
                    tracing::warn!(robot = %robot.id(), error = %e, "bad frame from robot");
                }
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let gw2 = gw.clone();
    let robot2 = robot.clone();
    let _ = tokio::task::spawn_blocking(move || gw2.disconnect(&robot2)).await;
    writer.abort();
}

async fn list_robots(State(gw): State<Gateway>) -> impl IntoResponse {
    Json(gw.robots())
}

async fn robot_packages(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, GatewayError> {
    Ok(Json(gw.packages_for(&id)?))
}

#[derive(Debug, Deserialize)]
struct OffloadRequest {
    robot: String,
    package: String,
    #[serde(default)]
    bindings: Option<Bindings>,
    #[serde(default)]
    params: Option<Value>,
}

async fn start_offload(
    State(gw): State<Gateway>,
    Json(req): Json<OffloadRequest>,
) -> Result<impl IntoResponse, GatewayError> {
    let info = gw.start_offload(&req.robot, &req.package, req.bindings, req.params.as_ref())?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_offloads(State(gw): State<Gateway>) -> impl IntoResponse {
    Json(gw.instances())
}

async fn get_offload(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, GatewayError> {
    Ok(Json(gw.instance(&id)?))
}

async fn stop_offload(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, GatewayError> {
    let snapshot = tokio::task::spawn_blocking(move || gw.stop_offload(&id))
        .await
        .map_err(|e| GatewayError::App(e.to_string()))??;
    Ok(Json(snapshot))
}

async fn metrics(State(gw): State<Gateway>) -> impl IntoResponse {
    let instances = gw.instances();
    let running = instances.iter().filter(|i| i.status.is_live()).count();
    Json(json!({
        "robots": gw.robots().len(),
        "instances": instances.len(),
        "instances_running": running,
        "dropped_inputs": instances.iter().map(|i| i.dropped).sum::<u64>(),
        "ingest_latency_ms": gw.ingest_latency_ms(),
    }))
}

async fn events_ws(State(gw): State<Gateway>, ws: WebSocketUpgrade) -> Response {
    let mut rx = gw.subscribe_events();
    ws.on_upgrade(move |socket| async move {
        let (mut sink, mut stream) = socket.split();
        loop {
            tokio::select! {
                ev = rx.recv() => match ev {
                    Ok(text) => {
                        if sink.send(Message::Text(text)).await.is_err() {
                            break;
                        }
                    }
                    Err(RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "event subscriber lagging");
                    }
                    Err(RecvError::Closed) => break,
                },
                msg = stream.next() => match msg {
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    _ => {}
                },
            }
        }
    })
}

fn xml_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, XML_CONTENT_TYPE)], body).into_response()
}

async fn post_frame(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, GatewayError> {
    let reference = headers
        .get("x-reference-id")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    let receipt = gw.ingest_frame(&id, &body, reference).await?;
    Ok(xml_response(StatusCode::OK, receipt.xml))
}

async fn latest(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
) -> Result<Response, GatewayError> {
    Ok(xml_response(StatusCode::OK, gw.latest_result(&id)?))
}
