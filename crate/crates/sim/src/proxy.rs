// SPDX-License-Identifier: Apache-2.0

//! Delay-injecting network stand-in. The byte-level proxy forwards any TCP
//! protocol (HTTP and WebSocket alike); the message-level proxy terminates
//! WebSocket connections so that whole messages can be dropped.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use smartcloud_core::simnet::{ProxyConfig, SimError};
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::{JoinHandle, JoinSet};
use tokio_tungstenite::tungstenite::handshake::server::{Request, Response};
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("upstream {addr} unreachable: {source}")]
    UpstreamUnreachable { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Config(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-message delay and drop draws from one seeded generator shared by
/// every connection of a proxy.
#[derive(Clone)]
pub struct LinkModel {
    config: ProxyConfig,
    jitter: Option<Normal<f64>>,
    rng: Arc<Mutex<ChaCha8Rng>>,
}

impl LinkModel {
    pub fn new(config: ProxyConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let jitter = if config.jitter_ms > 0.0 {
            Some(
                Normal::new(0.0, config.jitter_ms)
                    .map_err(|e| SimError::InvalidProxy(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            config,
            jitter,
            rng: Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed))),
        })
    }

    pub fn config(&self) -> ProxyConfig {
        self.config
    }

    /// One direction's delay for the next payload: one-way plus a normal
    /// jitter draw, floored at zero.
    pub fn draw_delay(&self) -> Duration {
        let mut ms = self.config.one_way_ms;
        if let Some(n) = &self.jitter {
            ms += n.sample(&mut *self.rng.lock().expect("rng lock"));
        }
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }

    pub fn draw_drop(&self) -> bool {
        self.config.drop > 0.0 && self.rng.lock().expect("rng lock").gen::<f64>() < self.config.drop
    }
}

/// FIFO release schedule: a payload never leaves before its predecessor.
struct Schedule {
    last: Option<Instant>,
}

impl Schedule {
    fn new() -> Self {
        Self { last: None }
    }

    fn next(&mut self, arrived: Instant, delay: Duration) -> Instant {
        let at = arrived + delay;
        let at = match self.last {
            Some(prev) if prev > at => prev,
            _ => at,
        };
        self.last = Some(at);
        at
    }
}

/// Sleeps until `at` with sub-millisecond accuracy: a coarse timer sleep,
/// then cooperative spinning for the last stretch.
pub async fn wait_until(at: Instant) {
    let slack = Duration::from_micros(1500);
    if let Some(coarse) = at.checked_sub(slack) {
        if coarse > Instant::now() {
            tokio::time::sleep_until(coarse.into()).await;
        }
    }
    while Instant::now() < at {
        tokio::task::yield_now().await;
    }
}

/// A running proxy; dropping it or calling [`ProxyHandle::shutdown`] closes
/// the listener and every proxied connection.
pub struct ProxyHandle {
    addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ProxyHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&self) {
        self.task.abort();
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn check_upstream(upstream: SocketAddr) -> Result<(), ProxyError> {
    TcpStream::connect(upstream)
        .await
        .map(drop)
        .map_err(|source| ProxyError::UpstreamUnreachable {
            addr: upstream,
            source,
        })
}

fn spawn_accept_loop<F, Fut>(listener: TcpListener, serve: F) -> JoinHandle<()>
where
    F: Fn(TcpStream) -> Fut + Send + 'static,
    Fut: std::future::Future<Output = ()> + Send + 'static,
{
    tokio::spawn(async move {
        let mut conns = JoinSet::new();
        loop {
            tokio::select! {
                accepted = listener.accept() => match accepted {
                    Ok((stream, _)) => {
                        let _ = stream.set_nodelay(true);
                        conns.spawn(serve(stream));
                    }
                    Err(e) => {
                        tracing::warn!(error = %e, "proxy accept failed");
                        break;
                    }
                },
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
    })
}

/// Byte-level proxy: every chunk read in either direction is held for a
/// fresh delay draw and released in order. Dropping bytes would corrupt the
/// stream, so a non-zero drop probability is rejected here.
pub async fn run_proxy(
    listener: TcpListener,
    upstream: SocketAddr,
    config: ProxyConfig,
    seed: u64,
) -> Result<ProxyHandle, ProxyError> {
    if config.drop > 0.0 {
        return Err(SimError::InvalidProxy(
            "byte streams cannot drop payloads; use the websocket proxy".into(),
        )
        .into());
    }
    let link = LinkModel::new(config, seed)?;
    check_upstream(upstream).await?;
    let addr = listener.local_addr()?;
    let task = spawn_accept_loop(listener, move |client| {
        let link = link.clone();
        async move {
            match TcpStream::connect(upstream).await {
                Ok(server) => {
                    let _ = server.set_nodelay(true);
                    pipe_bytes(client, server, link).await;
                }
                Err(e) => tracing::warn!(error = %e, "proxy could not reach upstream"),
            }
        }
    });
    Ok(ProxyHandle { addr, task })
}

async fn pipe_bytes(client: TcpStream, server: TcpStream, link: LinkModel) {
    let (cr, cw) = client.into_split();
    let (sr, sw) = server.into_split();
    let up = delayed_copy(cr, sw, link.clone());
    let down = delayed_copy(sr, cw, link);
    tokio::join!(up, down);
}

async fn delayed_copy<R, W>(mut reader: R, mut writer: W, link: LinkModel)
where
    R: AsyncReadExt + Unpin + Send + 'static,
    W: AsyncWriteExt + Unpin + Send + 'static,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<(Instant, Vec<u8>)>();
    let read = async move {
        let mut schedule = Schedule::new();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            match reader.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let at = schedule.next(Instant::now(), link.draw_delay());
                    if tx.send((at, buf[..n].to_vec())).is_err() {
                        break;
                    }
                }
            }
        }
    };
    let write = async move {
        while let Some((at, chunk)) = rx.recv().await {
            wait_until(at).await;
            if writer.write_all(&chunk).await.is_err() {
                return;
            }
        }
        let _ = writer.shutdown().await;
    };
    tokio::join!(read, write);
}

/// Message-level WebSocket proxy: each text or binary message gets its own
/// delay draw and is dropped with the configured probability. Control
/// frames pass through the same ordered queue without being dropped.
pub async fn run_ws_proxy(
    listener: TcpListener,
    upstream: SocketAddr,
    config: ProxyConfig,
    seed: u64,
) -> Result<ProxyHandle, ProxyError> {
    let link = LinkModel::new(config, seed)?;
    check_upstream(upstream).await?;
    let addr = listener.local_addr()?;
    let task = spawn_accept_loop(listener, move |client| {
        let link = link.clone();
        async move {
            if let Err(e) = pipe_ws(client, upstream, link).await {
                tracing::warn!(error = %e, "websocket proxy connection ended");
            }
        }
    });
    Ok(ProxyHandle { addr, task })
}

async fn pipe_ws(
    client: TcpStream,
    upstream: SocketAddr,
    link: LinkModel,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let mut target = String::from("/");
    let client = tokio_tungstenite::accept_hdr_async(client, |req: &Request, resp: Response| {
        target = req
            .uri()
            .path_and_query()
            .map(|p| p.as_str().to_owned())
            .unwrap_or_else(|| "/".into());
        Ok(resp)
    })
    .await?;
    let (server, _) = tokio_tungstenite::connect_async_with_config(
        format!("ws://{upstream}{target}"),
        None,
        true,
    )
    .await?;
    let (csink, cstream) = client.split();
    let (ssink, sstream) = server.split();
    tokio::join!(
        delayed_messages(cstream, ssink, link.clone()),
        delayed_messages(sstream, csink, link),
    );
    Ok(())
}

async fn delayed_messages<S, K>(mut stream: S, mut sink: K, link: LinkModel)
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
    K: futures::Sink<Message> + Unpin,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<(Instant, Message)>();
    let read = async move {
        let mut schedule = Schedule::new();
        while let Some(Ok(msg)) = stream.next().await {
            let droppable = matches!(msg, Message::Text(_) | Message::Binary(_));
            if droppable && link.draw_drop() {
                continue;
            }
            let closing = matches!(msg, Message::Close(_));
            let at = schedule.next(Instant::now(), link.draw_delay());
            if tx.send((at, msg)).is_err() || closing {
                break;
            }
        }
    };
    let write = async move {
        while let Some((at, msg)) = rx.recv().await {
            wait_until(at).await;
            if sink.send(msg).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    };
    tokio::join!(read, write);
}
