// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use smartcloud_core::apps::classifier::SHIPPED_FIXTURE_DIR;
use smartcloud_core::apps::MapperConfig;
use smartcloud_core::simnet::{
    ProxyConfig, ScenarioScript, WorldDoc, OFFICE_SCENARIO, OFFICE_WORLD,
};
use smartcloud_core::World;
use smartcloud_sim::{run_scenario, stream_mapping, MappingMode, ScenarioOptions, StreamOptions};

#[derive(Parser)]
#[command(
    name = "smartcloud-sim",
    about = "Simulated robots for the smartcloud gateway"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    mission: MissionArgs,
    /// tracing filter, e.g. `info` or `smartcloud_sim=debug`
    #[arg(long, default_value = "warn", global = true)]
    log_level: String,
}

#[derive(Subcommand)]
enum Command {
    /// Stream the scenario path continuously with onboard or offloaded mapping.
    Stream(StreamArgs),
}

#[derive(Args)]
struct MissionArgs {
    /// World document; the built-in office when omitted.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Scenario document; the built-in office mission when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    gateway: SocketAddr,
    /// Round-trip delay injected between the robots and the gateway.
    #[arg(long, value_parser = humantime::parse_duration)]
    proxy_rtt: Option<Duration>,
    /// Standard deviation of the per-direction delay.
    #[arg(long, value_parser = humantime::parse_duration)]
    jitter: Option<Duration>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Event log destination (newline-delimited JSON); stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory holding the camera fixture images.
    #[arg(long, default_value = SHIPPED_FIXTURE_DIR)]
    fixtures: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MappingArg {
    Onboard,
    Cloud,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long, value_enum)]
    mapping: MappingArg,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    gateway: SocketAddr,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "60s")]
    duration: Duration,
    #[arg(long, default_value = "jackal")]
    robot: String,
}

fn load(path: Option<&PathBuf>, builtin: &str) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(builtin.to_owned()),
    }
}

fn load_world_and_script(
    world: Option<&PathBuf>,
    scenario: Option<&PathBuf>,
) -> Result<(World, ScenarioScript)> {
    let world: World = WorldDoc::parse(&load(world, OFFICE_WORLD)?)?.build()?;
    let script = ScenarioScript::parse(&load(scenario, OFFICE_SCENARIO)?)?;
    script.validate(&world)?;
    Ok((world, script))
}

async fn mission(args: MissionArgs) -> Result<()> {
    let (world, script) = load_world_and_script(args.world.as_ref(), args.scenario.as_ref())?;
    let proxy = match (args.proxy_rtt, args.jitter) {
        (None, None) => None,
        (rtt, jitter) => Some(ProxyConfig::new(
            rtt.unwrap_or_default().as_secs_f64() * 1000.0 / 2.0,
            jitter.unwrap_or_default().as_secs_f64() * 1000.0,
            0.0,
        )?),
    };
    let opts = ScenarioOptions {
        fixtures_dir: args.fixtures,
        proxy,
        seed: args.seed,
        ..ScenarioOptions::default()
    };
    let outcome = run_scenario(&script, &world, args.gateway, &opts).await?;
    let log = outcome.to_ndjson();
    match &args.log {
        Some(path) => {
            std::fs::write(path, log).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(log.as_bytes())?,
    }
    eprintln!(
        "events: {}, target found: {}, final entropy: {}",
        outcome.events.len(),
        outcome.target_found(),
        outcome
            .final_entropy
            .map(|e| format!("{e:.1} bits"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

async fn stream(args: StreamArgs) -> Result<()> {
    let (world, script) = load_world_and_script(args.world.as_ref(), args.scenario.as_ref())?;
    let opts = StreamOptions {
        mode: match args.mapping {
            MappingArg::Onboard => MappingMode::Onboard,
            MappingArg::Cloud => MappingMode::Cloud,
        },
        gateway: Some(args.gateway),
        duration: args.duration,
        robot: args.robot,
        mapper: MapperConfig::default(),
    };
    let report = stream_mapping(&script, &world, &opts).await?;
    println!(
        "{}",
        serde_json::json!({ "scans": report.scans, "final_entropy": report.final_entropy })
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log_level))
        .with_writer(std::io::stderr)
        .init();
    match cli.command {
        Some(Command::Stream(args)) => tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()?
            .block_on(stream(args)),
        None => tokio::runtime::Runtime::new()?.block_on(mission(cli.mission)),
    }
}
