// SPDX-License-Identifier: Apache-2.0

//! Continuous lidar streaming with mapping either on the robot or
//! offloaded to the gateway. Scans are computed before streaming starts,
//! standing in for sensor hardware, so the robot process only pays for
//! what a real robot would: building messages and either mapping them or
//! sending them.

use std::net::SocketAddr;
use std::time::Duration;

use serde_json::{json, Value};
use smartcloud_core::apps::ros_json::{scan_message, tf_message};
use smartcloud_core::apps::{app_on_message, MapperApp, MapperConfig, OffloadApp};
use smartcloud_core::protocol::{encode, ProtocolMessage, TopicName};
use smartcloud_core::simnet::ScenarioScript;
use smartcloud_core::World;
use tokio::time::MissedTickBehavior;

use crate::client::{Http, RosLink, RunError};
use crate::scenario::{precompute_scans, MAPPING_PACKAGE, SCAN_TYPE, TF_TYPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingMode {
    Onboard,
    Cloud,
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub mode: MappingMode,
    /// Required for cloud mode.
    pub gateway: Option<SocketAddr>,
    pub duration: Duration,
    pub robot: String,
    pub mapper: MapperConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub scans: u64,
    pub final_entropy: Option<f64>,
}

/// Streams the scenario path in a loop at the script's scan rate for
/// `opts.duration`.
pub async fn stream_mapping(
    script: &ScenarioScript,
    world: &World,
    opts: &StreamOptions,
) -> Result<StreamReport, RunError> {
    let ticks = precompute_scans(script, world)?;
    let period = Duration::from_secs_f64(1.0 / script.scan_rate_hz);
    let mut clock = tokio::time::interval(period);
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let deadline = tokio::time::Instant::now() + opts.duration;
    let tf = TopicName::new("/tf").expect("valid topic");
    let scan_topic = TopicName::new("/scan").expect("valid topic");

    match opts.mode {
        MappingMode::Onboard => {
            let mut mapper =
                MapperApp::new(&opts.mapper).map_err(|e| RunError::Protocol(e.to_string()))?;
            let mut scans = 0u64;
            while tokio::time::Instant::now() < deadline {
                clock.tick().await;
                let (pose, scan) = &ticks[scans as usize % ticks.len()];
                let run = |app: &mut MapperApp, role: &str, payload: &Value| {
                    app_on_message(app, role, payload)
                        .map_err(|e| RunError::Protocol(e.to_string()))
                };
                run(&mut mapper, "tf", &tf_message(pose, scans))?;
                run(&mut mapper, "scan", &scan_message(scan, scans))?;
                scans += 1;
            }
            let entropy = mapper
                .finalize()
                .into_iter()
                .find(|o| o.channel == "entropy");
            Ok(StreamReport {
                scans,
                final_entropy: entropy.and_then(|o| o.value.as_f64()),
            })
        }
        MappingMode::Cloud => {
            let gateway = opts
                .gateway
                .ok_or_else(|| RunError::GatewayUnreachable("no gateway address given".into()))?;
            let control = Http::new(gateway);
            let mut link = RosLink::connect(gateway, &opts.robot, "ros").await?;
            link.send(&ProtocolMessage::advertise(tf.clone(), TF_TYPE))
                .await?;
            link.send(&ProtocolMessage::advertise(scan_topic.clone(), SCAN_TYPE))
                .await?;
            let params = serde_json::to_value(&opts.mapper).expect("params serialize");
            let mut started = None;
            for _ in 0..200 {
                match control
                    .post_json(
                        "/api/offloads",
                        &json!({ "robot": opts.robot, "package": MAPPING_PACKAGE, "params": params }),
                    )
                    .await
                {
                    // topics may not be registered yet
                    Err(RunError::Http { status: 422, .. }) => {
                        tokio::time::sleep(Duration::from_millis(10)).await;
                    }
                    other => {
                        started = Some(other?);
                        break;
                    }
                }
            }
            let info = started.ok_or_else(|| RunError::Timeout("offload start".into()))?;
            let instance = info
                .get("instance")
                .and_then(Value::as_str)
                .ok_or_else(|| RunError::Protocol("offload response without instance".into()))?
                .to_owned();
            let mut subscribed = 0;
            while subscribed < 2 {
                link.recv_matching(Duration::from_secs(10), "subscribe frames", |m| {
                    matches!(m, ProtocolMessage::Subscribe { .. })
                })
                .await?;
                subscribed += 1;
            }

            let (mut sink, mut incoming) = link.split();
            let drain = tokio::spawn(async move {
                while incoming.recv(Duration::from_secs(3600)).await.is_ok() {}
            });
            let mut scans = 0u64;
            while tokio::time::Instant::now() < deadline {
                clock.tick().await;
                let (pose, scan) = &ticks[scans as usize % ticks.len()];
                sink.send_batch([
                    encode(&ProtocolMessage::publish(
                        tf.clone(),
                        tf_message(pose, scans),
                    )),
                    encode(&ProtocolMessage::publish(
                        scan_topic.clone(),
                        scan_message(scan, scans),
                    )),
                ])
                .await?;
                scans += 1;
            }
            let snapshot = control
                .delete_json(&format!("/api/offloads/{instance}"))
                .await?;
            sink.close().await;
            drain.abort();
            Ok(StreamReport {
                scans,
                final_entropy: snapshot
                    .pointer("/outputs/entropy/value")
                    .and_then(Value::as_f64),
            })
        }
    }
}
