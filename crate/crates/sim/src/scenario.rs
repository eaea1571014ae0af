// SPDX-License-Identifier: Apache-2.0

//! Two-robot mission: a lidar robot streams `/tf` and `/scan` to an
//! offloaded mapper while a camera robot uploads frames to the detection
//! web service. The lidar robot polls the web service and stops mapping
//! once the target class is reported with enough confidence.
//!
//! Both robots run as separate tasks. They share a simulated clock (the
//! lidar robot's scan tick); the camera robot posts each frame when the
//! clock reaches its scheduled tick, and the lidar robot does not move past
//! a tick until the frames due by then have been posted. Each scan is
//! acknowledged by the mapper's entropy result before the next is sent,
//! which makes the event log independent of machine speed.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use smartcloud_core::apps::classifier::{Detection, SHIPPED_FIXTURE_DIR};
use smartcloud_core::apps::grid::MapSnapshot;
use smartcloud_core::apps::ros_json::{scan_message, tf_message};
use smartcloud_core::geometry::{LaserScan2D, Pose2D};
use smartcloud_core::protocol::{ProtocolMessage, TopicName};
use smartcloud_core::simnet::{simulate_scan, ProxyConfig, ScenarioScript};
use smartcloud_core::webservice::parse_detection_xml;
use smartcloud_core::World;
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::client::{Http, RosLink, RunError};
use crate::proxy::{run_proxy, ProxyHandle};

pub const LIDAR_ROBOT: &str = "jackal";
pub const CAMERA_ROBOT: &str = "roomba";
pub const MAPPING_PACKAGE: &str = "gmapping";
pub const DETECTION_PACKAGE: &str = "object_detection";
pub const TF_TYPE: &str = "tf2_msgs/TFMessage";
pub const SCAN_TYPE: &str = "sensor_msgs/LaserScan";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetFound,
    PathComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum ScenarioEvent {
    MappingStarted {
        tick: u64,
        package: String,
        poses: usize,
    },
    FramePosted {
        tick: u64,
        fixture: String,
        message_id: u64,
    },
    DetectionReported {
        tick: u64,
        message_id: u64,
        results: Vec<Detection>,
    },
    TargetFound {
        tick: u64,
        message_id: u64,
        label: String,
        probability: f64,
    },
    MappingStopped {
        tick: u64,
        reason: StopReason,
        scans: u64,
    },
}

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub fixtures_dir: PathBuf,
    /// Link model between the robots and the gateway; `None` connects
    /// directly.
    pub proxy: Option<ProxyConfig>,
    /// Seeds the link model's generator.
    pub seed: u64,
    /// Upper bound on any single wait for the gateway.
    pub step_timeout: Duration,
    /// Mapper parameters forwarded with the offload request.
    pub mapper_params: Option<Value>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            fixtures_dir: PathBuf::from(SHIPPED_FIXTURE_DIR),
            proxy: None,
            seed: 0,
            step_timeout: Duration::from_secs(10),
            mapper_params: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub events: Vec<ScenarioEvent>,
    /// Map returned by the mapper when it was stopped.
    pub final_map: Option<MapSnapshot>,
    pub final_entropy: Option<f64>,
    /// Entropy acknowledged after each scan, in bits.
    pub entropy_series: Vec<f64>,
}

impl ScenarioOutcome {
    /// The event log as newline-delimited JSON.
    pub fn to_ndjson(&self) -> String {
        events_to_ndjson(&self.events)
    }

    pub fn target_found(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e, ScenarioEvent::TargetFound { .. }))
    }
}

pub fn events_to_ndjson(events: &[ScenarioEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Default)]
struct EventLog(Arc<Mutex<Vec<ScenarioEvent>>>);

impl EventLog {
    fn push(&self, event: ScenarioEvent) {
        tracing::info!(?event, "scenario event");
        self.0.lock().expect("log lock").push(event);
    }

    fn take(&self) -> Vec<ScenarioEvent> {
        std::mem::take(&mut *self.0.lock().expect("log lock"))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CameraProgress {
    posted: usize,
    failed: bool,
}

struct ScheduledFrame {
    at_tick: u64,
    fixture: String,
    bytes: Vec<u8>,
}

fn load_frames(
    script: &ScenarioScript,
    dir: &std::path::Path,
) -> Result<Vec<ScheduledFrame>, RunError> {
    let mut frames = script
        .frames
        .iter()
        .map(|f| {
            let path = dir.join(&f.fixture);
            std::fs::read(&path)
                .map(|bytes| ScheduledFrame {
                    at_tick: f.at_tick,
                    fixture: f.fixture.clone(),
                    bytes,
                })
                .map_err(|_| RunError::FixtureMissing(path.display().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    frames.sort_by_key(|f| f.at_tick);
    Ok(frames)
}

/// Poses and their simulated scans, one pair per tick.
pub fn precompute_scans(
    script: &ScenarioScript,
    world: &World,
) -> Result<Vec<(Pose2D<f64>, LaserScan2D<f64>)>, RunError> {
    script.validate(world)?;
    let lidar = script.lidar.config::<f64>();
    script
        .poses::<f64>()
        .into_iter()
        .map(|pose| Ok((pose, simulate_scan(world, &pose, &lidar)?)))
        .collect()
}

fn topic(name: &str) -> TopicName {
    TopicName::new(name).expect("static topic names are valid")
}

fn instance_id(info: &Value) -> Result<String, RunError> {
    info.get("instance")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| RunError::Protocol(format!("offload response without instance: {info}")))
}

async fn poll_until<F>(within: Duration, what: &str, mut check: F) -> Result<(), RunError>
where
    F: FnMut() -> futures::future::BoxFuture<'static, Result<bool, RunError>>,
{
    let deadline = tokio::time::Instant::now() + within;
    loop {
        if check().await? {
            return Ok(());
        }
        if tokio::time::Instant::now() >= deadline {
            return Err(RunError::Timeout(what.to_owned()));
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

async fn robot_topics(http: &Http, robot: &str) -> Result<Option<BTreeSet<String>>, RunError> {
    let robots = http.get_json("/api/robots").await?;
    Ok(robots.as_array().and_then(|list| {
        list.iter()
            .find(|r| r.get("id").and_then(Value::as_str) == Some(robot))
            .map(|r| {
                r.get("topics")
                    .and_then(Value::as_object)
                    .map(|ts| ts.keys().cloned().collect())
                    .unwrap_or_default()
            })
    }))
}

/// Connects a robot, retrying while the gateway still holds a previous
/// session under the same id.
async fn connect_robot(
    addr: SocketAddr,
    robot: &str,
    mode: &str,
    within: Duration,
) -> Result<RosLink, RunError> {
    let deadline = tokio::time::Instant::now() + within;
    loop {
        match RosLink::connect(addr, robot, mode).await {
            Err(RunError::Http { status: 409, .. }) if tokio::time::Instant::now() < deadline => {
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
            other => return other,
        }
    }
}

/// Runs the mission against the gateway at `gateway` and returns the event
/// log and the final map.
pub async fn run_scenario(
    script: &ScenarioScript,
    world: &World,
    gateway: SocketAddr,
    opts: &ScenarioOptions,
) -> Result<ScenarioOutcome, RunError> {
    let ticks = precompute_scans(script, world)?;
    let frames = load_frames(script, &opts.fixtures_dir)?;
    let wait = opts.step_timeout;

    let _proxy: Option<ProxyHandle>;
    let robot_addr = match opts.proxy {
        Some(config) => {
            let listener = TcpListener::bind("127.0.0.1:0")
                .await
                .map_err(|e| RunError::GatewayUnreachable(e.to_string()))?;
            let handle = run_proxy(listener, gateway, config, opts.seed)
                .await
                .map_err(|e| RunError::GatewayUnreachable(e.to_string()))?;
            let addr = handle.local_addr();
            _proxy = Some(handle);
            addr
        }
        None => {
            _proxy = None;
            gateway
        }
    };
    let control = Http::new(gateway);
    let web = Http::new(robot_addr);

    let mut lidar = connect_robot(robot_addr, LIDAR_ROBOT, "ros", wait).await?;
    let camera = connect_robot(robot_addr, CAMERA_ROBOT, "raw", wait).await?;

    lidar
        .send(&ProtocolMessage::advertise(topic("/tf"), TF_TYPE))
        .await?;
    lidar
        .send(&ProtocolMessage::advertise(topic("/scan"), SCAN_TYPE))
        .await?;
    {
        let control = control.clone();
        poll_until(wait, "advertised topics", move || {
            let control = control.clone();
            Box::pin(async move {
                Ok(robot_topics(&control, LIDAR_ROBOT)
                    .await?
                    .is_some_and(|t| t.contains("/tf") && t.contains("/scan")))
            })
        })
        .await?;
    }

    let mut request = json!({ "robot": LIDAR_ROBOT, "package": MAPPING_PACKAGE });
    if let Some(p) = &opts.mapper_params {
        request["params"] = p.clone();
    }
    let mapper = instance_id(&control.post_json("/api/offloads", &request).await?)?;
    let detector = instance_id(
        &control
            .post_json(
                "/api/offloads",
                &json!({ "robot": CAMERA_ROBOT, "package": DETECTION_PACKAGE }),
            )
            .await?,
    )?;

    let mut pending: BTreeSet<&str> = ["/tf", "/scan"].into_iter().collect();
    while !pending.is_empty() {
        let msg = lidar
            .recv_matching(wait, "subscribe frames", |m| {
                matches!(m, ProtocolMessage::Subscribe { .. })
            })
            .await?;
        if let Some(t) = msg.topic() {
            pending.remove(t.as_str());
        }
    }
    let entropy_topic = topic(&format!("/smartcloud/{mapper}/entropy"));
    lidar
        .send(&ProtocolMessage::subscribe(entropy_topic.clone(), None))
        .await?;

    let log = EventLog::default();
    log.push(ScenarioEvent::MappingStarted {
        tick: 0,
        package: MAPPING_PACKAGE.to_owned(),
        poses: ticks.len(),
    });

    let (tick_tx, tick_rx) = watch::channel::<Option<u64>>(None);
    let (progress_tx, mut progress_rx) = watch::channel(CameraProgress::default());
    let due: Vec<u64> = frames.iter().map(|f| f.at_tick).collect();
    let camera_task = tokio::spawn(camera_robot(
        web.clone(),
        frames,
        tick_rx,
        progress_tx,
        log.clone(),
    ));

    let mut entropy_series = Vec::with_capacity(ticks.len());
    let mut last_seen = 0u64;
    let mut reason = StopReason::PathComplete;
    let mut last_tick = 0u64;
    let mut scans = 0u64;
    let mut lidar_error = None;
    for (k, (pose, scan)) in ticks.iter().enumerate() {
        let tick = k as u64;
        last_tick = tick;
        let step = async {
            lidar
                .send(&ProtocolMessage::publish(
                    topic("/tf"),
                    tf_message(pose, tick),
                ))
                .await?;
            lidar
                .send(&ProtocolMessage::publish(
                    topic("/scan"),
                    scan_message(scan, tick),
                ))
                .await?;
            let ack = lidar
                .recv_matching(wait, "entropy acknowledgement", |m| {
                    matches!(m, ProtocolMessage::Publish { topic, .. } if *topic == entropy_topic)
                })
                .await?;
            if let ProtocolMessage::Publish { msg, .. } = ack {
                entropy_series.push(msg.as_f64().unwrap_or(f64::NAN));
            }
            Ok::<_, RunError>(())
        };
        if let Err(e) = step.await {
            lidar_error = Some(e);
            break;
        }
        scans += 1;

        let _ = tick_tx.send(Some(tick));
        let needed = due.iter().filter(|&&t| t <= tick).count();
        let camera = tokio::time::timeout(
            wait,
            progress_rx.wait_for(|p| p.failed || p.posted >= needed),
        )
        .await
        .map(|r| r.map(|p| p.failed));
        match camera {
            Ok(Ok(false)) => {}
            // the camera task reports its own error when joined
            Ok(_) => break,
            Err(_) => {
                lidar_error = Some(RunError::Timeout("camera frame upload".into()));
                break;
            }
        }

        if tick.is_multiple_of(script.poll_every) {
            let report = match web
                .get_text(&format!("/streams/{CAMERA_ROBOT}/latest"))
                .await
            {
                Ok(xml) => parse_detection_xml(&xml).map_err(|e| RunError::Protocol(e.to_string())),
                Err(e) => Err(e),
            };
            let report = match report {
                Ok(r) => r,
                Err(e) => {
                    lidar_error = Some(e);
                    break;
                }
            };
            if report.message_id > last_seen {
                last_seen = report.message_id;
                log.push(ScenarioEvent::DetectionReported {
                    tick,
                    message_id: report.message_id,
                    results: report.results.clone(),
                });
                if let Some(hit) = report
                    .results
                    .iter()
                    .find(|d| d.label == script.target && d.probability >= script.threshold)
                {
                    log.push(ScenarioEvent::TargetFound {
                        tick,
                        message_id: report.message_id,
                        label: hit.label.clone(),
                        probability: hit.probability,
                    });
                    reason = StopReason::TargetFound;
                    break;
                }
            }
        }
    }
    drop(tick_tx);
    let camera = match camera_task.await {
        Ok(Ok(())) => camera,
        Ok(Err(e)) => return Err(e),
        Err(e) => return Err(RunError::Protocol(format!("camera robot task failed: {e}"))),
    };
    if let Some(e) = lidar_error {
        return Err(e);
    }

    let snapshot = control
        .delete_json(&format!("/api/offloads/{mapper}"))
        .await?;
    log.push(ScenarioEvent::MappingStopped {
        tick: last_tick,
        reason,
        scans,
    });
    control
        .delete_json(&format!("/api/offloads/{detector}"))
        .await?;

    lidar.close().await;
    camera.close().await;
    {
        let control = control.clone();
        poll_until(wait, "robot disconnect", move || {
            let control = control.clone();
            Box::pin(async move {
                Ok(robot_topics(&control, LIDAR_ROBOT).await?.is_none()
                    && robot_topics(&control, CAMERA_ROBOT).await?.is_none())
            })
        })
        .await?;
    }

    let output = |channel: &str| {
        snapshot
            .pointer(&format!("/outputs/{channel}/value"))
            .cloned()
    };
    let final_map = output("map")
        .map(|v| MapSnapshot::from_json(&v).map_err(|e| RunError::Protocol(e.to_string())))
        .transpose()?;
    let final_entropy = output("entropy").and_then(|v| v.as_f64());
    Ok(ScenarioOutcome {
        events: log.take(),
        final_map,
        final_entropy,
        entropy_series,
    })
}

async fn camera_robot(
    web: Http,
    frames: Vec<ScheduledFrame>,
    mut clock: watch::Receiver<Option<u64>>,
    progress: watch::Sender<CameraProgress>,
    log: EventLog,
) -> Result<(), RunError> {
    let fail = |e: RunError| {
        progress.send_modify(|p| p.failed = true);
        e
    };
    for (k, frame) in frames.into_iter().enumerate() {
        let reached = clock
            .wait_for(|t| t.is_some_and(|t| t >= frame.at_tick))
            .await
            .is_ok();
        if !reached {
            return Ok(());
        }
        let xml = web
            .post_frame(CAMERA_ROBOT, frame.bytes, &frame.fixture)
            .await
            .map_err(fail)?;
        let report =
            parse_detection_xml(&xml).map_err(|e| fail(RunError::Protocol(e.to_string())))?;
        log.push(ScenarioEvent::FramePosted {
            tick: frame.at_tick,
            fixture: frame.fixture,
            message_id: report.message_id,
        });
        progress.send_modify(|p| p.posted = k + 1);
    }
    Ok(())
}
