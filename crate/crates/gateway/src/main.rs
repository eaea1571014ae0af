// SPDX-License-Identifier: Apache-2.0

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use smartcloud_core::apps::classifier::{ClassifierConfig, FixtureManifest};
use smartcloud_core::apps::AppContext;
use smartcloud_core::registry::{load_registry, Registry};
use smartcloud_gateway::{serve, Gateway, GatewayConfig};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "smartcloud-gateway", about = "Robot offloading gateway")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Package registry JSON; the shipped registry when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Reject publishes on topics that were never advertised.
    #[arg(long)]
    strict_advertise: bool,
    #[arg(long, default_value_t = 256)]
    queue_cap: usize,
    /// Classifier fixture manifest; the shipped fixtures when omitted.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&args.log_level).context("bad --log-level")?)
        .init();

    let registry = match &args.registry {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            load_registry(&text).with_context(|| format!("loading {}", path.display()))?
        }
        None => Registry::shipped(),
    };
    let classifier = match &args.fixtures {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let manifest = FixtureManifest::parse(&text)
                .with_context(|| format!("loading {}", path.display()))?;
            ClassifierConfig::with_manifest(&manifest)
        }
        None => ClassifierConfig::shipped(),
    };
    let config = GatewayConfig {
        strict_advertise: args.strict_advertise,
        queue_cap: args.queue_cap,
    };
    let gw = Gateway::with_context(registry, config, AppContext { classifier });
    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .with_context(|| format!("binding {}", args.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    serve(listener, gw).await?;
    Ok(())
}
