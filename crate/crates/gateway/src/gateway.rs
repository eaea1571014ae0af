// SPDX-License-Identifier: Apache-2.0

//! Gateway state: live robot sessions, offload instances and result routing.
//! Everything here is synchronous apart from frame ingest, which waits for
//! the detector worker; the HTTP layer in `api` is a thin shell over it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value};
use smartcloud_core::apps::{
    instantiate, AppContext, AppCounters, AppError, AppInput, DetectionReport, OffloadApp,
};
use smartcloud_core::metrics::{LatencySink, MonotonicClock, Summary};
use smartcloud_core::protocol::{
    decode, encode, EffectKind, Endpoint, Origin, ProtocolMessage, RouteEffect, SessionConfig,
    SessionId, SessionMode, SessionState, TopicName, ECHO_SERVICE,
};
use smartcloud_core::registry::{
    apps_for_payload, bind_roles, validate_bindings, BindingError, Bindings, PackageDescriptor,
    PayloadKind, Registry, Runtime,
};
use smartcloud_core::webservice::{decode_frame_body, render_detection_xml, ResultStore};
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::inbox::{Inbox, Job};
use crate::{worker, GatewayError};

/// Consumer name the gateway uses when it answers service calls itself.
const GATEWAY_CONSUMER: &str = "gateway";

#[derive(Debug, Clone, Copy)]
pub struct GatewayConfig {
    pub strict_advertise: bool,
    /// Per-instance input queue bound.
    pub queue_cap: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            strict_advertise: false,
            queue_cap: 256,
        }
    }
}

/// Builds the app behind a package; replaceable for tests.
pub type AppFactory = Arc<
    dyn Fn(&PackageDescriptor, Option<&Value>) -> Result<Box<dyn OffloadApp>, AppError>
        + Send
        + Sync,
>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Starting,
    Running,
    Stopped,
    Failed,
}

impl InstanceStatus {
    pub fn is_live(self) -> bool {
        matches!(self, Self::Starting | Self::Running)
    }
}

/// What an uploaded frame produced: its message id and rendered XML.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReceipt {
    pub message_id: u64,
    pub xml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSlot {
    pub seq: u64,
    pub value: Value,
}

/// Frames queued for the robot's websocket writer.
#[derive(Debug)]
pub enum Outbound {
    Text(String),
}

pub struct RobotConn {
    id: String,
    mode: SessionMode,
    connected_at: SystemTime,
    conn: u64,
    session: Mutex<SessionState>,
    tx: mpsc::UnboundedSender<Outbound>,
}

impl RobotConn {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    fn send(&self, msg: &ProtocolMessage) {
        // a closed channel means the socket is going away; disconnect cleans up
        let _ = self.tx.send(Outbound::Text(encode(msg)));
    }
}

/// What `register_robot` hands to the websocket task.
pub struct RobotSession {
    pub robot: Arc<RobotConn>,
    pub outbound: mpsc::UnboundedReceiver<Outbound>,
}

pub(crate) struct Instance {
    pub id: String,
    pub package: String,
    pub runtime: Runtime,
    pub robot: String,
    pub mode: SessionMode,
    pub bindings: Bindings,
    pub status: Mutex<InstanceStatus>,
    pub outputs: Mutex<BTreeMap<String, OutputSlot>>,
    pub counters: Mutex<AppCounters>,
    pub errors: AtomicU64,
    pub inbox: Inbox,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Instance {
    fn roles_for<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.bindings
            .iter()
            .filter(move |(_, t)| t.as_str() == topic)
            .map(|(role, _)| role)
    }

    fn topics(&self) -> BTreeSet<&str> {
        self.bindings.values().map(String::as_str).collect()
    }

    fn status(&self) -> InstanceStatus {
        *self.status.lock()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobotInfo {
    pub id: String,
    pub mode: SessionMode,
    /// Milliseconds since the Unix epoch.
    pub connected_at: u64,
    pub topics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PackageOffer {
    pub id: String,
    pub bindings: Bindings,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceInfo {
    pub instance: String,
    pub package: String,
    pub robot: String,
    pub bindings: Bindings,
    pub status: InstanceStatus,
    /// Latest sequence number per output channel.
    pub outputs: BTreeMap<String, u64>,
    pub processed: u64,
    pub skipped: u64,
    pub errors: u64,
    pub dropped: u64,
    pub queued: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSnapshot {
    pub instance: String,
    pub status: InstanceStatus,
    pub outputs: BTreeMap<String, OutputSlot>,
}

struct Shared {
    registry: Registry,
    config: GatewayConfig,
    factory: AppFactory,
    robots: Mutex<BTreeMap<String, Arc<RobotConn>>>,
    instances: Mutex<BTreeMap<String, Arc<Instance>>>,
    results: ResultStore,
    events: broadcast::Sender<String>,
    next_instance: AtomicU64,
    next_conn: AtomicU64,
    clock: MonotonicClock,
    ingest_latency: LatencySink,
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Shared>,
}

fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn default_factory(ctx: AppContext) -> AppFactory {
    Arc::new(move |pkg, params| match pkg.runtime {
        Some(rt) => instantiate(rt, params, &ctx),
        None => Err(AppError::Init(format!("package {} has no runtime", pkg.id))),
    })
}

impl Gateway {
    pub fn new(registry: Registry, config: GatewayConfig) -> Self {
        Self::with_context(registry, config, AppContext::default())
    }

    pub fn with_context(registry: Registry, config: GatewayConfig, ctx: AppContext) -> Self {
        Self::with_factory(registry, config, default_factory(ctx))
    }

    pub fn with_factory(registry: Registry, config: GatewayConfig, factory: AppFactory) -> Self {
        let (events, _) = broadcast::channel(1024);
        Self {
            inner: Arc::new(Shared {
                registry,
                config,
                factory,
                robots: Mutex::new(BTreeMap::new()),
                instances: Mutex::new(BTreeMap::new()),
                results: ResultStore::new(),
                events,
                next_instance: AtomicU64::new(1),
                next_conn: AtomicU64::new(1),
                clock: MonotonicClock::new(),
                ingest_latency: LatencySink::new(),
            }),
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    pub fn results(&self) -> &ResultStore {
        &self.inner.results
    }

    pub fn subscribe_events(&self) -> broadcast::Receiver<String> {
        self.inner.events.subscribe()
    }

    fn emit(&self, event: Value) {
        if self.inner.events.receiver_count() > 0 {
            let _ = self.inner.events.send(event.to_string());
        }
    }

    fn session_config(&self) -> SessionConfig {
        SessionConfig {
            strict_advertise: self.inner.config.strict_advertise,
        }
    }

    // ---- sessions ----

    pub fn register_robot(
        &self,
        id: &str,
        mode: SessionMode,
    ) -> Result<RobotSession, GatewayError> {
        if id.is_empty() {
            return Err(GatewayError::Handshake("robot id must not be empty".into()));
        }
        let (tx, rx) = mpsc::unbounded_channel();
        let robot = Arc::new(RobotConn {
            id: id.to_owned(),
            mode,
            connected_at: SystemTime::now(),
            conn: self.inner.next_conn.fetch_add(1, Ordering::Relaxed),
            session: Mutex::new(SessionState::new(SessionId::new(id), mode)),
            tx,
        });
        {
            let mut robots = self.inner.robots.lock();
            if robots.contains_key(id) {
                return Err(GatewayError::DuplicateRobotId(id.to_owned()));
            }
            robots.insert(id.to_owned(), robot.clone());
        }
        tracing::info!(robot = id, ?mode, "robot connected");
        self.emit(json!({"event": "connect", "robot": id, "mode": mode}));
        Ok(RobotSession {
            robot,
            outbound: rx,
        })
    }

    /// Removes the robot and stops its instances. Blocks while workers
    /// finish; call from a blocking context.
    pub fn disconnect(&self, robot: &RobotConn) {
        {
            let mut robots = self.inner.robots.lock();
            match robots.get(&robot.id) {
                Some(live) if live.conn == robot.conn => {
                    robots.remove(&robot.id);
                }
                _ => return,
            }
        }
        let owned: Vec<Arc<Instance>> = self
            .inner
            .instances
            .lock()
            .values()
            .filter(|i| i.robot == robot.id)
            .cloned()
            .collect();
        for inst in owned {
            let _ = self.stop_instance(&inst);
        }
        self.inner.results.close(&robot.id);
        tracing::info!(robot = %robot.id, "robot disconnected");
        self.emit(json!({"event": "disconnect", "robot": robot.id}));
    }

    fn robot(&self, id: &str) -> Option<Arc<RobotConn>> {
        self.inner.robots.lock().get(id).cloned()
    }

    /// One text frame from a robot. `received` marks when the frame came
    /// off the socket and anchors the echo service's processing time.
    pub fn handle_robot_text(
        &self,
        robot: &Arc<RobotConn>,
        text: &str,
        received: Instant,
    ) -> Result<(), GatewayError> {
        let msg = decode(text).map_err(GatewayError::Decode)?;
        let announced = match &msg {
            ProtocolMessage::Advertise { topic, .. } | ProtocolMessage::Publish { topic, .. } => {
                Some(topic.clone())
            }
            _ => None,
        };
        let (step, new_topic) = {
            let mut session = robot.session.lock();
            let before = announced
                .as_ref()
                .and_then(|t| session.advertised().get(t).cloned());
            let step = session.step(msg, &Origin::FromRobot, &self.session_config());
            let after = announced
                .as_ref()
                .and_then(|t| session.advertised().get(t).cloned());
            let new_topic = match (announced, after) {
                (Some(t), Some(ty)) if before.as_ref() != Some(&ty) => Some((t, ty)),
                _ => None,
            };
            (step, new_topic)
        };
        if let Some((topic, ty)) = new_topic {
            self.emit(json!({
                "event": "topic-advertised",
                "robot": robot.id,
                "topic": topic.as_str(),
                "type": ty,
            }));
        }
        for d in &step.diagnostics {
            tracing::debug!(robot = %robot.id, "{d}");
        }
        self.execute(robot, step.effects, received);
        Ok(())
    }

    fn execute(&self, robot: &Arc<RobotConn>, effects: Vec<RouteEffect>, received: Instant) {
        for effect in effects {
            match (effect.kind, &effect.target) {
                (EffectKind::Deliver, Endpoint::Consumer(instance)) => {
                    self.feed_instance(instance, &effect.payload);
                }
                (
                    EffectKind::Deliver | EffectKind::Respond | EffectKind::Forward,
                    Endpoint::Session(_),
                ) => {
                    robot.send(&effect.payload);
                }
                (EffectKind::Forward, Endpoint::Service(service)) => {
                    self.call_builtin(robot, service, effect.payload, received);
                }
                (EffectKind::Reject, _) => {
                    tracing::warn!(
                        robot = %robot.id,
                        reason = effect.reason.as_deref().unwrap_or(""),
                        "frame rejected"
                    );
                }
                (EffectKind::Respond, Endpoint::Consumer(c)) => {
                    tracing::debug!(consumer = %c, "response for a cloud caller");
                }
                _ => {}
            }
        }
    }

    fn feed_instance(&self, instance: &str, msg: &ProtocolMessage) {
        let ProtocolMessage::Publish {
            topic,
            msg: payload,
            ..
        } = msg
        else {
            return;
        };
        let Some(inst) = self.inner.instances.lock().get(instance).cloned() else {
            return;
        };
        for role in inst.roles_for(topic.as_str()) {
            inst.inbox.push(Job {
                input: AppInput::Topic {
                    role: role.clone(),
                    payload: payload.clone(),
                },
                reply: None,
            });
        }
    }

    fn call_builtin(
        &self,
        robot: &Arc<RobotConn>,
        service: &TopicName,
        call: ProtocolMessage,
        received: Instant,
    ) {
        let ProtocolMessage::CallService { id, args, .. } = call else {
            return;
        };
        let (values, result) = if service.as_str() == ECHO_SERVICE {
            let processing_ns = received.elapsed().as_nanos() as u64;
            (
                json!({ "args": args.unwrap_or(Value::Null), "processing_ns": processing_ns }),
                true,
            )
        } else {
            (json!({ "error": format!("no service {service}") }), false)
        };
        let response = ProtocolMessage::ServiceResponse {
            id,
            service: service.clone(),
            values: Some(values),
            result,
        };
        let step = robot.session.lock().step(
            response,
            &Origin::FromCloud(GATEWAY_CONSUMER.to_owned()),
            &self.session_config(),
        );
        self.execute(robot, step.effects, received);
    }

    // ---- control API ----

    pub fn robots(&self) -> Vec<RobotInfo> {
        self.inner
            .robots
            .lock()
            .values()
            .map(|r| RobotInfo {
                id: r.id.clone(),
                mode: r.mode,
                connected_at: unix_ms(r.connected_at),
                topics: r
                    .session
                    .lock()
                    .advertised()
                    .iter()
                    .map(|(t, ty)| (t.as_str().to_owned(), ty.clone()))
                    .collect(),
            })
            .collect()
    }

    fn advertised(robot: &RobotConn) -> BTreeMap<String, String> {
        robot
            .session
            .lock()
            .advertised()
            .iter()
            .map(|(t, ty)| (t.as_str().to_owned(), ty.clone()))
            .collect()
    }

    /// Packages the robot can run. ROS robots are matched on their
    /// advertised topics; raw robots are offered the payload apps.
    pub fn packages_for(&self, robot_id: &str) -> Result<Vec<PackageOffer>, GatewayError> {
        let robot = self
            .robot(robot_id)
            .ok_or_else(|| GatewayError::UnknownRobot(robot_id.to_owned()))?;
        let reg = &self.inner.registry;
        let offers = match robot.mode {
            SessionMode::Ros => {
                let available = Self::advertised(&robot);
                reg.packages()
                    .filter(|p| !p.required_topics.is_empty())
                    .filter_map(|p| {
                        bind_roles(p, &available).map(|bindings| PackageOffer {
                            id: p.id.clone(),
                            bindings,
                            outputs: p.outputs.clone(),
                        })
                    })
                    .collect()
            }
            SessionMode::NonRos => self
                .raw_capable()
                .into_iter()
                .filter_map(|id| reg.get(&id))
                .map(|p| PackageOffer {
                    id: p.id.clone(),
                    bindings: Bindings::new(),
                    outputs: p.outputs.clone(),
                })
                .collect(),
        };
        Ok(offers)
    }

    fn raw_capable(&self) -> BTreeSet<String> {
        [PayloadKind::Image, PayloadKind::Gps, PayloadKind::LaserScan]
            .into_iter()
            .flat_map(|k| apps_for_payload(k, &self.inner.registry))
            .collect()
    }

    pub fn start_offload(
        &self,
        robot_id: &str,
        package_id: &str,
        bindings: Option<Bindings>,
        params: Option<&Value>,
    ) -> Result<InstanceInfo, GatewayError> {
        let robot = self
            .robot(robot_id)
            .ok_or_else(|| GatewayError::UnknownRobot(robot_id.to_owned()))?;
        let pkg = self
            .inner
            .registry
            .get(package_id)
            .ok_or_else(|| GatewayError::UnknownPackage(package_id.to_owned()))?
            .clone();
        let runtime = pkg
            .runtime
            .ok_or_else(|| GatewayError::AppInit(format!("package {package_id} has no runtime")))?;
        let bindings = match robot.mode {
            SessionMode::Ros => {
                let available = Self::advertised(&robot);
                let bindings = match bindings {
                    Some(b) => b,
                    None => bind_roles(&pkg, &available).ok_or_else(|| {
                        GatewayError::MissingTopic(format!(
                            "robot {robot_id} advertises no topics satisfying {package_id}"
                        ))
                    })?,
                };
                validate_bindings(&pkg, &bindings, &available).map_err(|e| match e {
                    BindingError::MissingTopic(t) => GatewayError::MissingTopic(t),
                    other => GatewayError::InvalidBinding(other),
                })?;
                bindings
            }
            SessionMode::NonRos => {
                if !self.raw_capable().contains(package_id) {
                    return Err(GatewayError::AppInit(format!(
                        "package {package_id} cannot consume raw payloads"
                    )));
                }
                Bindings::new()
            }
        };
        let app =
            (self.inner.factory)(&pkg, params).map_err(|e| GatewayError::AppInit(e.to_string()))?;

        let n = self.inner.next_instance.fetch_add(1, Ordering::Relaxed);
        let inst = Arc::new(Instance {
            id: format!("{package_id}-{n}"),
            package: package_id.to_owned(),
            runtime,
            robot: robot_id.to_owned(),
            mode: robot.mode,
            bindings,
            status: Mutex::new(InstanceStatus::Starting),
            outputs: Mutex::new(BTreeMap::new()),
            counters: Mutex::new(AppCounters::default()),
            errors: AtomicU64::new(0),
            inbox: Inbox::new(self.inner.config.queue_cap),
            worker: Mutex::new(None),
        });
        self.inner
            .instances
            .lock()
            .insert(inst.id.clone(), inst.clone());
        self.emit_status(&inst, InstanceStatus::Starting);

        match robot.mode {
            SessionMode::Ros => self.subscribe_bindings(&robot, &inst),
            SessionMode::NonRos => self.inner.results.open(robot_id),
        }
        *inst.status.lock() = InstanceStatus::Running;
        self.emit_status(&inst, InstanceStatus::Running);
        let spawned = {
            let gw = self.clone();
            let inst = inst.clone();
            std::thread::Builder::new()
                .name(format!("app-{}", inst.id))
                .spawn(move || worker::run(gw, inst, app))
        };
        match spawned {
            Ok(handle) => *inst.worker.lock() = Some(handle),
            Err(e) => {
                self.fail_instance(&inst, &e.to_string());
                return Err(GatewayError::AppInit(e.to_string()));
            }
        }
        tracing::info!(instance = %inst.id, robot = robot_id, "offload started");
        Ok(self.info(&inst))
    }

    fn subscribe_bindings(&self, robot: &Arc<RobotConn>, inst: &Instance) {
        let pkg = self.inner.registry.get(&inst.package);
        let mut effects = Vec::new();
        {
            let mut session = robot.session.lock();
            for topic in inst.topics() {
                let Ok(name) = TopicName::new(topic) else {
                    continue;
                };
                let ty = pkg.and_then(|p| {
                    inst.roles_for(topic)
                        .next()
                        .and_then(|r| p.required_topics.get(r).cloned())
                });
                let step = session.step(
                    ProtocolMessage::subscribe(name, ty),
                    &Origin::FromCloud(inst.id.clone()),
                    &self.session_config(),
                );
                effects.extend(step.effects);
            }
        }
        self.execute(robot, effects, Instant::now());
    }

    fn release_bindings(&self, inst: &Instance) {
        let Some(robot) = self.robot(&inst.robot) else {
            return;
        };
        if robot.mode != SessionMode::Ros {
            return;
        }
        let mut effects = Vec::new();
        {
            let mut session = robot.session.lock();
            for topic in inst.topics() {
                let Ok(name) = TopicName::new(topic) else {
                    continue;
                };
                let step = session.step(
                    ProtocolMessage::unsubscribe(name),
                    &Origin::FromCloud(inst.id.clone()),
                    &self.session_config(),
                );
                effects.extend(step.effects);
            }
        }
        self.execute(&robot, effects, Instant::now());
    }

    /// Topics the gateway currently subscribes to on the robot's behalf.
    pub fn cloud_subscriptions(&self, robot_id: &str) -> Option<BTreeSet<String>> {
        let robot = self.robot(robot_id)?;
        let topics = robot
            .session
            .lock()
            .subscriptions()
            .iter()
            .filter(|(_, s)| {
                s.consumers
                    .iter()
                    .any(|c| matches!(c, Endpoint::Consumer(name) if name != GATEWAY_CONSUMER))
            })
            .map(|(t, _)| t.as_str().to_owned())
            .collect();
        Some(topics)
    }

    /// Stops the instance, waits for its worker to finalize and returns
    /// the final outputs. Blocks; call from a blocking context.
    pub fn stop_offload(&self, instance_id: &str) -> Result<InstanceSnapshot, GatewayError> {
        let inst = self
            .inner
            .instances
            .lock()
            .get(instance_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownInstance(instance_id.to_owned()))?;
        self.stop_instance(&inst)
    }

    fn stop_instance(&self, inst: &Arc<Instance>) -> Result<InstanceSnapshot, GatewayError> {
        {
            let mut st = inst.status.lock();
            if !st.is_live() {
                return Err(GatewayError::AlreadyStopped(inst.id.clone()));
            }
            *st = InstanceStatus::Stopped;
        }
        inst.inbox.close();
        let handle = inst.worker.lock().take();
        if let Some(h) = handle {
            if h.join().is_err() {
                tracing::error!(instance = %inst.id, "worker panicked during shutdown");
            }
        }
        self.release_bindings(inst);
        if inst.mode == SessionMode::NonRos && !self.stream_has_detector(&inst.robot) {
            self.inner.results.close(&inst.robot);
        }
        self.emit_status(inst, InstanceStatus::Stopped);
        tracing::info!(instance = %inst.id, "offload stopped");
        Ok(InstanceSnapshot {
            instance: inst.id.clone(),
            status: InstanceStatus::Stopped,
            outputs: inst.outputs.lock().clone(),
        })
    }

    /// Called by a worker whose app panicked.
    pub(crate) fn fail_instance(&self, inst: &Arc<Instance>, reason: &str) {
        {
            let mut st = inst.status.lock();
            if !st.is_live() {
                return;
            }
            *st = InstanceStatus::Failed;
        }
        inst.inbox.abandon();
        self.release_bindings(inst);
        tracing::error!(instance = %inst.id, reason, "app instance failed");
        self.emit_status(inst, InstanceStatus::Failed);
    }

    fn emit_status(&self, inst: &Instance, status: InstanceStatus) {
        self.emit(json!({
            "event": "status-change",
            "instance": inst.id,
            "robot": inst.robot,
            "package": inst.package,
            "status": status,
        }));
    }

    fn info(&self, inst: &Instance) -> InstanceInfo {
        let counters = *inst.counters.lock();
        InstanceInfo {
            instance: inst.id.clone(),
            package: inst.package.clone(),
            robot: inst.robot.clone(),
            bindings: inst.bindings.clone(),
            status: inst.status(),
            outputs: inst
                .outputs
                .lock()
                .iter()
                .map(|(c, s)| (c.clone(), s.seq))
                .collect(),
            processed: counters.processed,
            skipped: counters.skipped,
            errors: inst.errors.load(Ordering::Relaxed),
            dropped: inst.inbox.dropped(),
            queued: inst.inbox.len(),
        }
    }

    pub fn instances(&self) -> Vec<InstanceInfo> {
        let all: Vec<Arc<Instance>> = self.inner.instances.lock().values().cloned().collect();
        all.iter().map(|i| self.info(i)).collect()
    }

    pub fn instance(&self, id: &str) -> Result<InstanceSnapshot, GatewayError> {
        let inst = self
            .inner
            .instances
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownInstance(id.to_owned()))?;
        let status = inst.status();
        let outputs = inst.outputs.lock().clone();
        Ok(InstanceSnapshot {
            instance: inst.id.clone(),
            status,
            outputs,
        })
    }

    // ---- results ----

    /// Records an app output and routes it. Returns a receipt when the
    /// output went to a result stream.
    pub(crate) fn publish_result(
        &self,
        inst: &Instance,
        channel: &str,
        mut value: Value,
    ) -> Option<FrameReceipt> {
        let mut receipt = None;
        if inst.mode == SessionMode::NonRos && inst.runtime == Runtime::ImageClassifier {
            if let Some(mut report) = DetectionReport::from_json(&value) {
                if let Ok(id) = self.inner.results.publish(&inst.robot, report.clone()) {
                    report.message_id = id;
                    value["message_id"] = json!(id);
                    receipt = Some(FrameReceipt {
                        message_id: id,
                        xml: render_detection_xml(&report),
                    });
                }
            }
        }
        let seq = {
            let mut outputs = inst.outputs.lock();
            let slot = outputs.entry(channel.to_owned()).or_insert(OutputSlot {
                seq: 0,
                value: Value::Null,
            });
            slot.seq += 1;
            slot.value = value.clone();
            slot.seq
        };
        if inst.mode == SessionMode::Ros {
            if let Some(robot) = self.robot(&inst.robot) {
                let topic = TopicName::new(format!("/smartcloud/{}/{}", inst.id, channel))
                    .expect("instance topics start with a slash");
                let step = robot.session.lock().step(
                    ProtocolMessage::publish(topic, value.clone()),
                    &Origin::FromCloud(inst.id.clone()),
                    &self.session_config(),
                );
                self.execute(&robot, step.effects, Instant::now());
            }
        }
        self.emit(json!({
            "event": "result",
            "instance": inst.id,
            "robot": inst.robot,
            "channel": channel,
            "seq": seq,
            "value": value,
        }));
        receipt
    }

    pub(crate) fn store_final(&self, inst: &Instance, channel: &str, value: Value) {
        let mut outputs = inst.outputs.lock();
        let slot = outputs.entry(channel.to_owned()).or_insert(OutputSlot {
            seq: 0,
            value: Value::Null,
        });
        slot.seq += 1;
        slot.value = value;
    }

    fn stream_has_detector(&self, stream: &str) -> bool {
        self.live_detector(stream).is_some()
    }

    fn live_detector(&self, stream: &str) -> Option<Arc<Instance>> {
        self.inner
            .instances
            .lock()
            .values()
            .find(|i| {
                i.robot == stream
                    && i.mode == SessionMode::NonRos
                    && i.runtime == Runtime::ImageClassifier
                    && i.status().is_live()
            })
            .cloned()
    }

    /// Classifies an uploaded frame on the stream's detector and returns
    /// the stored result.
    pub async fn ingest_frame(
        &self,
        stream: &str,
        body: &[u8],
        reference_id: &str,
    ) -> Result<FrameReceipt, GatewayError> {
        let started = self.inner.clock.now_ns();
        if !self.inner.results.contains(stream) {
            return Err(GatewayError::UnknownStream(stream.to_owned()));
        }
        let image = decode_frame_body(body).map_err(|e| GatewayError::BadFrame(e.to_string()))?;
        let inst = self
            .live_detector(stream)
            .ok_or_else(|| GatewayError::UnknownStream(stream.to_owned()))?;
        let (tx, rx) = oneshot::channel();
        let queued = inst.inbox.push(Job {
            input: AppInput::Frame {
                image,
                reference_id: reference_id.to_owned(),
            },
            reply: Some(tx),
        });
        if !queued {
            return Err(GatewayError::UnknownStream(stream.to_owned()));
        }
        let receipt = rx.await.map_err(|_| GatewayError::FrameDropped)??;
        let done = self.inner.clock.now_ns();
        let _ = self.inner.ingest_latency.record(started, done, 0, 0);
        Ok(receipt)
    }

    pub fn latest_result(&self, stream: &str) -> Result<String, GatewayError> {
        self.inner
            .results
            .latest_result(stream)
            .map_err(|_| GatewayError::UnknownStream(stream.to_owned()))
    }

    /// Ingest-to-result latency in milliseconds, if any frame was handled.
    pub fn ingest_latency_ms(&self) -> Option<Summary<f64>> {
        self.inner.ingest_latency.rtt_summary_ms().ok()
    }
}
