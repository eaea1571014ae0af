// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use smartcloud_core::apps::{
    instantiate, AppContext, AppCounters, AppError, AppInput, AppOutput, OffloadApp,
};
use smartcloud_core::protocol::{decode, encode, ProtocolMessage, SessionMode, TopicName};
use smartcloud_core::registry::load_registry;
use smartcloud_gateway::{AppFactory, Gateway, GatewayConfig, Outbound, RobotConn};
use tokio::sync::mpsc::UnboundedReceiver;

/// Shipped packages plus two probes whose behavior tests control.
pub const TEST_REGISTRY: &str = r#"{
  "schema": "smartcloud-registry/1",
  "packages": [
    {
      "id": "gmapping",
      "kind": "ros_package",
      "required_topics": {"scan": "sensor_msgs/LaserScan", "tf": "tf2_msgs/TFMessage"},
      "outputs": ["map", "entropy"],
      "runtime": "occupancy_mapper"
    },
    {
      "id": "object_detection",
      "kind": "js_library_app",
      "required_topics": {"image": "sensor_msgs/CompressedImage"},
      "outputs": ["detections"],
      "runtime": "image_classifier"
    },
    {
      "id": "scan_probe",
      "kind": "ros_package",
      "required_topics": {"scan": "sensor_msgs/LaserScan"},
      "outputs": ["out"],
      "runtime": "occupancy_mapper"
    },
    {
      "id": "tf_probe",
      "kind": "ros_package",
      "required_topics": {"tf": "tf2_msgs/TFMessage"},
      "outputs": ["out"],
      "runtime": "occupancy_mapper"
    }
  ],
  "payload_apps": {"image": ["object_detection"]}
}"#;

/// Echoes `n` from each input on channel `out`; panics on `{"panic": true}`.
pub struct ProbeApp {
    counters: AppCounters,
}

impl OffloadApp for ProbeApp {
    fn on_input(&mut self, input: AppInput) -> Result<Vec<AppOutput>, AppError> {
        let AppInput::Topic { payload, .. } = input else {
            return Err(AppError::TypeMismatch("probe takes topic frames".into()));
        };
        if payload.get("panic") == Some(&Value::Bool(true)) {
            panic!("probe asked to panic");
        }
        self.counters.processed += 1;
        Ok(vec![AppOutput::new("out", json!({ "n": payload["n"] }))])
    }

    fn finalize(&mut self) -> Vec<AppOutput> {
        vec![AppOutput::new(
            "out",
            json!({ "final": self.counters.processed }),
        )]
    }

    fn counters(&self) -> AppCounters {
        self.counters
    }
}

pub fn probe_factory() -> AppFactory {
    let ctx = AppContext::default();
    Arc::new(move |pkg, params| {
        if pkg.id.ends_with("_probe") {
            Ok(Box::new(ProbeApp {
                counters: AppCounters::default(),
            }) as Box<dyn OffloadApp>)
        } else {
            instantiate(
                pkg.runtime.expect("test packages have runtimes"),
                params,
                &ctx,
            )
        }
    })
}

pub fn test_gateway() -> Gateway {
    Gateway::with_factory(
        load_registry(TEST_REGISTRY).unwrap(),
        GatewayConfig::default(),
        probe_factory(),
    )
}

pub fn topic(name: &str) -> TopicName {
    TopicName::new(name).unwrap()
}

/// A robot attached to a gateway without a socket in between.
pub struct Bot {
    pub gw: Gateway,
    pub conn: Arc<RobotConn>,
    rx: UnboundedReceiver<Outbound>,
}

impl Bot {
    pub fn connect(gw: &Gateway, id: &str, mode: SessionMode) -> Self {
        let session = gw.register_robot(id, mode).unwrap();
        Self {
            gw: gw.clone(),
            conn: session.robot,
            rx: session.outbound,
        }
    }

    pub fn send(&self, msg: &ProtocolMessage) {
        self.gw
            .handle_robot_text(&self.conn, &encode(msg), Instant::now())
            .unwrap();
    }

    pub fn advertise(&self, name: &str, ty: &str) {
        self.send(&ProtocolMessage::advertise(topic(name), ty));
    }

    pub fn publish(&self, name: &str, msg: Value) {
        self.send(&ProtocolMessage::publish(topic(name), msg));
    }

    /// Frames already queued for the robot.
    pub fn drain(&mut self) -> Vec<ProtocolMessage> {
        let mut out = Vec::new();
        while let Ok(Outbound::Text(t)) = self.rx.try_recv() {
            out.push(decode(&t).unwrap());
        }
        out
    }

    /// Waits for `n` frames or the deadline, whichever comes first.
    pub fn collect(&mut self, n: usize, within: Duration) -> Vec<ProtocolMessage> {
        let deadline = Instant::now() + within;
        let mut out = Vec::new();
        while out.len() < n && Instant::now() < deadline {
            match self.rx.try_recv() {
                Ok(Outbound::Text(t)) => out.push(decode(&t).unwrap()),
                Err(_) => std::thread::sleep(Duration::from_millis(2)),
            }
        }
        out
    }
}

/// Serves `gw` on an ephemeral port.
pub async fn spawn_server(gw: Gateway) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(smartcloud_gateway::serve(listener, gw));
    addr
}

pub fn wait_until(within: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + within;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    cond()
}
