// SPDX-License-Identifier: Apache-2.0

use std::net::SocketAddr;
use std::time::{Duration, Instant, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use smartcloud_core::metrics::{core_count, summarize, CpuSampler, LatencySink, MetricsError};
use smartcloud_core::registry::Registry;
use smartcloud_core::simnet::ProxyConfig;
use smartcloud_gateway::{Gateway, GatewayConfig};
use smartcloud_sim::{echo_round_trips, run_proxy};
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(
    name = "smartcloud-bench",
    about = "Latency and CPU measurements for the smartcloud gateway"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Echo round trips through a delay-injecting proxy.
    Latency {
        /// Injected round-trip delay.
        #[arg(long, value_parser = humantime::parse_duration, default_value = "32ms")]
        rtt: Duration,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Standard deviation of the per-direction delay.
        #[arg(long, value_parser = humantime::parse_duration, default_value = "0ms")]
        jitter: Duration,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Existing gateway; an in-process one is started when omitted.
        #[arg(long)]
        gateway: Option<SocketAddr>,
    },
    /// Per-process CPU utilization samples.
    Cpu {
        #[arg(long)]
        watch: u32,
        #[arg(long, value_parser = humantime::parse_duration, default_value = "1s")]
        interval: Duration,
        /// Stop after this long; otherwise runs until the process exits.
        #[arg(long, value_parser = humantime::parse_duration)]
        duration: Option<Duration>,
    },
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

async fn latency(
    rtt: Duration,
    count: usize,
    jitter: Duration,
    seed: u64,
    gateway: Option<SocketAddr>,
) -> Result<()> {
    let upstream = match gateway {
        Some(addr) => addr,
        None => {
            let gw = Gateway::new(Registry::shipped(), GatewayConfig::default());
            let listener = TcpListener::bind("127.0.0.1:0").await?;
            let addr = listener.local_addr()?;
            tokio::spawn(smartcloud_gateway::serve(listener, gw));
            addr
        }
    };
    let config = ProxyConfig::new(ms(rtt) / 2.0, ms(jitter), 0.0)?;
    let proxy = run_proxy(
        TcpListener::bind("127.0.0.1:0").await?,
        upstream,
        config,
        seed,
    )
    .await?;
    let samples = echo_round_trips(proxy.local_addr(), "bench", count, rtt).await?;

    println!("timestamp_ms,rtt_ms");
    for s in &samples {
        println!(
            "{:.3},{:.4}",
            s.sent_ns as f64 / 1e6,
            s.rtt_ns() as f64 / 1e6
        );
    }
    let sink = LatencySink::new();
    for s in &samples {
        sink.push(*s);
    }
    let transport: Vec<f64> = samples
        .iter()
        .map(|s| s.transport_ns() as f64 / 1e6)
        .collect();
    let summary = json!({
        "injected_rtt_ms": ms(rtt),
        "rtt_ms": sink.rtt_summary_ms()?,
        "processing_ms": sink.processing_summary_ms()?,
        "overhead_ms": sink.overhead_summary_ms()?,
        "transport_ms": summarize(&transport)?,
    });
    println!("{summary}");
    Ok(())
}

fn cpu(pid: u32, interval: Duration, duration: Option<Duration>) -> Result<()> {
    let mut sampler = CpuSampler::new(pid).with_context(|| format!("watching pid {pid}"))?;
    let stop = duration.map(|d| Instant::now() + d);
    let mut values = Vec::new();
    println!("timestamp_ms,utilization_pct");
    while stop.is_none_or(|s| Instant::now() < s) {
        std::thread::sleep(interval);
        let sample = match sampler.sample() {
            Ok(s) => s,
            Err(MetricsError::NoSuchProcess(_)) => break,
            Err(e) => return Err(e.into()),
        };
        let ts = sample
            .timestamp
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis();
        println!("{ts},{:.2}", sample.utilization);
        values.push(sample.utilization);
    }
    let summary = json!({
        "pid": pid,
        "interval_s": interval.as_secs_f64(),
        "cores": core_count(),
        "utilization_pct": summarize(&values).ok(),
    });
    println!("{summary}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Latency {
            rtt,
            count,
            jitter,
            seed,
            gateway,
        } => tokio::runtime::Runtime::new()?.block_on(latency(rtt, count, jitter, seed, gateway)),
        Command::Cpu {
            watch,
            interval,
            duration,
        } => cpu(watch, interval, duration),
    }
}
