// SPDX-License-Identifier: Apache-2.0

//! Robot-side connections to the gateway: the rosbridge WebSocket link and
//! plain HTTP calls against the control API and web service.

use std::net::SocketAddr;
use std::time::Duration;

use futures::stream::{SplitSink, SplitStream};
use futures::{SinkExt, StreamExt};
use serde_json::Value;
use smartcloud_core::protocol::{decode, encode, ProtocolMessage};
use smartcloud_core::simnet::SimError;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("gateway unreachable: {0}")]
    GatewayUnreachable(String),
    #[error("fixture missing: {0}")]
    FixtureMissing(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

/// Robot end of a rosbridge connection.
pub struct RosLink {
    sink: LinkSink,
    stream: LinkStream,
}

pub struct LinkSink(SplitSink<Ws, Message>);
pub struct LinkStream(SplitStream<Ws>);

impl RosLink {
    /// `mode` is the gateway's query value: `ros` or `raw`.
    pub async fn connect(addr: SocketAddr, robot: &str, mode: &str) -> Result<Self, RunError> {
        let url = format!("ws://{addr}/robot?robot={robot}&mode={mode}");
        let (ws, _) = tokio_tungstenite::connect_async_with_config(url, None, true)
            .await
            .map_err(|e| match e {
                WsError::Http(resp) => RunError::Http {
                    status: resp.status().as_u16(),
                    body: resp
                        .body()
                        .as_ref()
                        .map(|b| String::from_utf8_lossy(b).into_owned())
                        .unwrap_or_default(),
                },
                other => RunError::GatewayUnreachable(other.to_string()),
            })?;
        let (sink, stream) = ws.split();
        Ok(Self {
            sink: LinkSink(sink),
            stream: LinkStream(stream),
        })
    }

    pub async fn send(&mut self, msg: &ProtocolMessage) -> Result<(), RunError> {
        self.sink.send(msg).await
    }

    pub async fn send_text(&mut self, text: String) -> Result<(), RunError> {
        self.sink.send_text(text).await
    }

    pub async fn recv(&mut self, within: Duration) -> Result<ProtocolMessage, RunError> {
        self.stream.recv(within).await
    }

    /// Next message satisfying `pred`; others are discarded.
    pub async fn recv_matching(
        &mut self,
        within: Duration,
        what: &str,
        mut pred: impl FnMut(&ProtocolMessage) -> bool,
    ) -> Result<ProtocolMessage, RunError> {
        let deadline = tokio::time::Instant::now() + within;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            let msg = self.stream.recv(left).await.map_err(|e| match e {
                RunError::Timeout(_) => RunError::Timeout(what.to_owned()),
                other => other,
            })?;
            if pred(&msg) {
                return Ok(msg);
            }
        }
    }

    pub fn split(self) -> (LinkSink, LinkStream) {
        (self.sink, self.stream)
    }

    pub async fn close(mut self) {
        let _ = self.sink.0.close().await;
    }
}

impl LinkSink {
    pub async fn send(&mut self, msg: &ProtocolMessage) -> Result<(), RunError> {
        self.send_text(encode(msg)).await
    }

    pub async fn send_text(&mut self, text: String) -> Result<(), RunError> {
        self.0
            .send(Message::Text(text))
            .await
            .map_err(|e| RunError::Protocol(e.to_string()))
    }

    /// Queues several frames and flushes them together.
    pub async fn send_batch(
        &mut self,
        texts: impl IntoIterator<Item = String>,
    ) -> Result<(), RunError> {
        let err = |e: WsError| RunError::Protocol(e.to_string());
        for text in texts {
            self.0.feed(Message::Text(text)).await.map_err(err)?;
        }
        self.0.flush().await.map_err(err)
    }

    pub async fn close(mut self) {
        let _ = self.0.close().await;
    }
}

impl LinkStream {
    pub async fn recv(&mut self, within: Duration) -> Result<ProtocolMessage, RunError> {
        let next = async {
            loop {
                match self.0.next().await {
                    Some(Ok(Message::Text(text))) => {
                        return decode(&text).map_err(|e| RunError::Protocol(e.to_string()))
                    }
                    Some(Ok(Message::Close(_))) | None => {
                        return Err(RunError::Protocol("gateway closed the link".into()))
                    }
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => return Err(RunError::Protocol(e.to_string())),
                }
            }
        };
        tokio::time::timeout(within, next)
            .await
            .map_err(|_| RunError::Timeout("gateway message".into()))?
    }
}

/// Thin HTTP helper bound to one base address.
#[derive(Clone)]
pub struct Http {
    base: String,
    client: reqwest::Client,
}

impl Http {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
        }
    }

    async fn finish(resp: Result<reqwest::Response, reqwest::Error>) -> Result<String, RunError> {
        let resp = resp.map_err(|e| RunError::GatewayUnreachable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| RunError::Protocol(e.to_string()))?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(RunError::Http {
                status: status.as_u16(),
                body,
            })
        }
    }

    fn json(text: &str) -> Result<Value, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Protocol(e.to_string()))
    }

    pub async fn get_text(&self, path: &str) -> Result<String, RunError> {
        Self::finish(self.client.get(format!("{}{path}", self.base)).send().await).await
    }

    pub async fn get_json(&self, path: &str) -> Result<Value, RunError> {
        Self::json(&self.get_text(path).await?)
    }

    pub async fn post_json(&self, path: &str, body: &Value) -> Result<Value, RunError> {
        let req = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body.to_string());
        Self::json(&Self::finish(req.send().await).await?)
    }

    pub async fn delete_json(&self, path: &str) -> Result<Value, RunError> {
        let req = self.client.delete(format!("{}{path}", self.base));
        Self::json(&Self::finish(req.send().await).await?)
    }

    /// Posts a camera frame to a web-service stream and returns the XML.
    pub async fn post_frame(
        &self,
        stream: &str,
        body: Vec<u8>,
        reference: &str,
    ) -> Result<String, RunError> {
        let req = self
            .client
            .post(format!("{}/streams/{stream}/frames", self.base))
            .header("content-type", "image/jpeg")
            .header("x-reference-id", reference)
            .body(body);
        Self::finish(req.send().await).await
    }
}
