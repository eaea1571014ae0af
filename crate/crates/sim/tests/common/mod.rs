// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use smartcloud_core::registry::Registry;
use smartcloud_gateway::{Gateway, GatewayConfig};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

pub async fn spawn_gateway() -> (Gateway, SocketAddr) {
    let gw = Gateway::new(Registry::shipped(), GatewayConfig::default());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(smartcloud_gateway::serve(listener, gw.clone()));
    (gw, addr)
}

/// Line echo server.
pub async fn spawn_echo() -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        while let Ok((stream, _)) = listener.accept().await {
            let _ = stream.set_nodelay(true);
            tokio::spawn(async move {
                let (r, mut w) = stream.into_split();
                let mut lines = BufReader::new(r).lines();
                while let Ok(Some(line)) = lines.next_line().await {
                    if w.write_all(format!("{line}\n").as_bytes()).await.is_err() {
                        break;
                    }
                }
            });
        }
    });
    addr
}

pub struct LineClient {
    stream: BufReader<TcpStream>,
}

impl LineClient {
    pub async fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).await.unwrap();
        stream.set_nodelay(true).unwrap();
        Self {
            stream: BufReader::new(stream),
        }
    }

    pub async fn send(&mut self, line: &str) {
        self.stream
            .get_mut()
            .write_all(format!("{line}\n").as_bytes())
            .await
            .unwrap();
    }

    pub async fn recv(&mut self) -> String {
        let mut line = String::new();
        tokio::time::timeout(Duration::from_secs(5), self.stream.read_line(&mut line))
            .await
            .expect("echo within 5 s")
            .unwrap();
        line.trim_end().to_owned()
    }

    /// Sequential round trips in milliseconds.
    pub async fn round_trips(&mut self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let t0 = Instant::now();
            self.send(&format!("ping {k}")).await;
            assert_eq!(self.recv().await, format!("ping {k}"));
            out.push(t0.elapsed().as_secs_f64() * 1000.0);
        }
        out
    }

    pub async fn read_raw(&mut self, buf: &mut [u8]) -> usize {
        self.stream.read(buf).await.unwrap()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
