// SPDX-License-Identifier: Apache-2.0

mod common;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use smartcloud_core::protocol::{decode, encode, ProtocolMessage, TopicName};
use smartcloud_core::registry::Registry;
use smartcloud_gateway::{Gateway, GatewayConfig, ECHO_SERVICE};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::{self, Message};
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name);
    std::fs::read(path).unwrap()
}

async fn server() -> SocketAddr {
    common::spawn_server(Gateway::new(Registry::shipped(), GatewayConfig::default())).await
}

async fn robot(addr: SocketAddr, id: &str, mode: &str) -> Ws {
    let url = format!("ws://{addr}/robot?robot={id}&mode={mode}");
    connect_async(url).await.unwrap().0
}

async fn events(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/api/events"))
        .await
        .unwrap()
        .0
}

async fn send(ws: &mut Ws, msg: &ProtocolMessage) {
    ws.send(Message::Text(encode(msg))).await.unwrap();
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("timed out waiting for a frame")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Skips events until one named `name` arrives.
async fn next_event(ws: &mut Ws, name: &str) -> Value {
    loop {
        let ev = next_json(ws).await;
        if ev["event"] == name {
            return ev;
        }
    }
}

async fn advertise(ws: &mut Ws, topic: &str, ty: &str) {
    send(
        ws,
        &ProtocolMessage::advertise(TopicName::new(topic).unwrap(), ty),
    )
    .await;
}

/// Polls `GET url` until `cond` holds on the JSON body.
async fn poll_json(url: &str, cond: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..250 {
        let v: Value = reqwest::get(url).await.unwrap().json().await.unwrap();
        if cond(&v) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("condition never held for {url}");
}

#[tokio::test]
async fn duplicate_robot_id_is_refused() {
    let addr = server().await;
    let _first = robot(addr, "jackal", "ros").await;
    let err = connect_async(format!("ws://{addr}/robot?robot=jackal&mode=ros"))
        .await
        .unwrap_err();
    match err {
        tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 409),
        other => panic!("expected an HTTP refusal, got {other:?}"),
    }
    let bad_mode = connect_async(format!("ws://{addr}/robot?robot=x&mode=can"))
        .await
        .unwrap_err();
    assert!(matches!(bad_mode, tungstenite::Error::Http(r) if r.status() == 400));
}

#[tokio::test]
async fn connect_and_close_are_symmetric_events() {
    let addr = server().await;
    let mut ev = events(addr).await;
    let mut jackal = robot(addr, "jackal", "ros").await;
    let connect = next_event(&mut ev, "connect").await;
    assert_eq!(
        connect,
        json!({"event": "connect", "robot": "jackal", "mode": "ros"})
    );

    jackal.close(None).await.unwrap();
    let disconnect = next_event(&mut ev, "disconnect").await;
    assert_eq!(disconnect["robot"], "jackal");
    let robots = poll_json(&format!("http://{addr}/api/robots"), |v| {
        v.as_array().unwrap().is_empty()
    })
    .await;
    assert_eq!(robots, json!([]));

    // the id is free again
    let _again = robot(addr, "jackal", "ros").await;
}

#[tokio::test]
async fn advertised_topics_drive_the_package_listing() {
    let addr = server().await;
    let mut ev = events(addr).await;
    let mut jackal = robot(addr, "jackal", "ros").await;
    advertise(&mut jackal, "/tf", "tf2_msgs/TFMessage").await;
    advertise(&mut jackal, "/scan", "sensor_msgs/LaserScan").await;
    let first = next_event(&mut ev, "topic-advertised").await;
    assert_eq!(first["topic"], "/tf");
    assert_eq!(
        next_event(&mut ev, "topic-advertised").await["topic"],
        "/scan"
    );

    let robots: Value = reqwest::get(format!("http://{addr}/api/robots"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(robots[0]["id"], "jackal");
    assert_eq!(
        robots[0]["topics"],
        json!({"/scan": "sensor_msgs/LaserScan", "/tf": "tf2_msgs/TFMessage"})
    );

    let packages: Value = reqwest::get(format!("http://{addr}/api/robots/jackal/packages"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let ids: Vec<&str> = packages
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["gmapping"]);
    assert_eq!(
        packages[0]["bindings"],
        json!({"scan": "/scan", "tf": "/tf"})
    );

    let missing = reqwest::get(format!("http://{addr}/api/robots/husky/packages"))
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);
}

#[tokio::test]
async fn offload_lifecycle_over_http() {
    let addr = server().await;
    let client = reqwest::Client::new();
    let mut ev = events(addr).await;
    let mut jackal = robot(addr, "jackal", "ros").await;
    advertise(&mut jackal, "/tf", "tf2_msgs/TFMessage").await;
    advertise(&mut jackal, "/scan", "sensor_msgs/LaserScan").await;
    next_event(&mut ev, "topic-advertised").await;
    next_event(&mut ev, "topic-advertised").await;

    let offloads = format!("http://{addr}/api/offloads");
    let missing = client
        .post(&offloads)
        .json(&json!({"robot": "jackal", "package": "gmapping", "bindings": {"tf": "/tf", "scan": "/missing"}}))
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 422);
    let unknown = client
        .post(&offloads)
        .json(&json!({"robot": "husky", "package": "gmapping"}))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);

    let created = client
        .post(&offloads)
        .json(&json!({"robot": "jackal", "package": "gmapping", "bindings": {"tf": "/tf", "scan": "/scan"}}))
        .send()
        .await
        .unwrap();
    assert_eq!(created.status(), 201);
    let body: Value = created.json().await.unwrap();
    let id = body["instance"].as_str().unwrap().to_owned();
    assert_eq!(body["status"], "running");

    let mut subscribed = Vec::new();
    for _ in 0..2 {
        let frame = next_json(&mut jackal).await;
        assert_eq!(frame["op"], "subscribe");
        subscribed.push(frame["topic"].as_str().unwrap().to_owned());
    }
    subscribed.sort();
    assert_eq!(subscribed, ["/scan", "/tf"]);
    assert_eq!(
        next_event(&mut ev, "status-change").await["status"],
        "starting"
    );
    assert_eq!(
        next_event(&mut ev, "status-change").await["status"],
        "running"
    );

    let table: Value = client
        .get(&offloads)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(table[0]["instance"], id.as_str());

    let stopped = client
        .delete(format!("{offloads}/{id}"))
        .send()
        .await
        .unwrap();
    assert_eq!(stopped.status(), 200);
    let snap: Value = stopped.json().await.unwrap();
    assert_eq!(snap["status"], "stopped");
    assert!(snap["outputs"]["map"]["value"]["cells"].is_string());
    assert_eq!(
        next_event(&mut ev, "status-change").await["status"],
        "stopped"
    );
    for _ in 0..2 {
        assert_eq!(next_json(&mut jackal).await["op"], "unsubscribe");
    }

    let again = client
        .delete(format!("{offloads}/{id}"))
        .send()
        .await
        .unwrap();
    assert_eq!(again.status(), 409);
    let nope = client
        .delete(format!("{offloads}/nope"))
        .send()
        .await
        .unwrap();
    assert_eq!(nope.status(), 404);
}

#[tokio::test]
async fn echo_service_reports_processing_time() {
    let addr = server().await;
    let mut jackal = robot(addr, "jackal", "ros").await;
    let call = ProtocolMessage::CallService {
        id: Some("c1".into()),
        service: TopicName::new(ECHO_SERVICE).unwrap(),
        service_type: None,
        args: Some(json!({"payload": "x"})),
    };
    send(&mut jackal, &call).await;
    let reply = next_json(&mut jackal).await;
    assert_eq!(reply["op"], "service_response");
    assert_eq!(reply["id"], "c1");
    assert_eq!(reply["result"], true);
    assert_eq!(reply["values"]["args"], json!({"payload": "x"}));
    assert!(reply["values"]["processing_ns"].as_u64().unwrap() < 1_000_000_000);

    let other = ProtocolMessage::CallService {
        id: Some("c2".into()),
        service: TopicName::new("/nowhere").unwrap(),
        service_type: None,
        args: None,
    };
    send(&mut jackal, &other).await;
    let reply = decode(&next_json(&mut jackal).await.to_string()).unwrap();
    assert!(matches!(
        reply,
        ProtocolMessage::ServiceResponse { result: false, .. }
    ));
}

async fn camera_with_detector(addr: SocketAddr) -> Ws {
    let cam = robot(addr, "camera", "raw").await;
    let packages: Value = poll_json(&format!("http://{addr}/api/robots/camera/packages"), |v| {
        v.as_array().is_some_and(|a| !a.is_empty())
    })
    .await;
    let ids: Vec<&str> = packages
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["gps_geofence", "object_detection", "object_tracking"]);
    let client = reqwest::Client::new();
    let tracking = client
        .post(format!("http://{addr}/api/offloads"))
        .json(&json!({"robot": "camera", "package": "object_tracking"}))
        .send()
        .await
        .unwrap();
    assert_eq!(tracking.status(), 422);
    let created = client
        .post(format!("http://{addr}/api/offloads"))
        .json(&json!({"robot": "camera", "package": "object_detection"}))
        .send()
        .await
        .unwrap();
    assert_eq!(created.status(), 201);
    cam
}

#[tokio::test]
async fn webservice_numbers_messages_and_serves_xml() {
    let addr = server().await;
    let _cam = camera_with_detector(addr).await;
    let client = reqwest::Client::new();
    let frames = format!("http://{addr}/streams/camera/frames");

    let latest = client
        .get(format!("http://{addr}/streams/camera/latest"))
        .send()
        .await
        .unwrap();
    assert_eq!(latest.status(), 200);
    assert!(latest
        .text()
        .await
        .unwrap()
        .contains("<MessageID>0</MessageID>"));

    for (k, name) in ["corridor_1.jpg", "corridor_2.jpg", "office.jpg"]
        .iter()
        .enumerate()
    {
        let resp = client
            .post(&frames)
            .body(fixture(name))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200);
        assert_eq!(resp.headers()["content-type"], "application/xml");
        let xml = resp.text().await.unwrap();
        assert!(
            xml.contains(&format!("<MessageID>{}</MessageID>", k + 1)),
            "{xml}"
        );
    }
    let latest = client
        .get(format!("http://{addr}/streams/camera/latest"))
        .send()
        .await
        .unwrap();
    assert_eq!(latest.headers()["content-type"], "application/xml");
    let xml = latest.text().await.unwrap();
    assert!(xml.contains("<MessageID>3</MessageID>"));
    assert!(xml.contains("<Class>Trash Can</Class>"));

    let garbage = client
        .post(&frames)
        .body(vec![0x13u8, 0x37, 0x00, 0xff])
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), 400);
    let unknown = client
        .post(format!("http://{addr}/streams/nobody/frames"))
        .body(fixture("office.jpg"))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);
    let unknown = client
        .get(format!("http://{addr}/streams/nobody/latest"))
        .send()
        .await
        .unwrap();
    assert_eq!(unknown.status(), 404);
}

#[tokio::test]
async fn first_office_frame_matches_the_reference_listing() {
    let addr = server().await;
    let _cam = camera_with_detector(addr).await;
    let client = reqwest::Client::new();
    let frames = format!("http://{addr}/streams/camera/frames");
    let xml = client
        .post(&frames)
        .body(fixture("office.jpg"))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    let golden = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/detection.xml"),
    )
    .unwrap();
    assert_eq!(xml, golden);

    let tagged = client
        .post(&frames)
        .header("X-Reference-Id", "frame-42")
        .body(fixture("office.jpg"))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert!(
        tagged.contains("<ReferenceID>frame-42</ReferenceID>"),
        "{tagged}"
    );
    assert!(tagged.contains("<MessageID>2</MessageID>"));
}

#[tokio::test]
async fn metrics_endpoint_counts_ingest() {
    let addr = server().await;
    let _cam = camera_with_detector(addr).await;
    let client = reqwest::Client::new();
    client
        .post(format!("http://{addr}/streams/camera/frames"))
        .body(fixture("office.jpg"))
        .send()
        .await
        .unwrap();
    let m: Value = client
        .get(format!("http://{addr}/api/metrics"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(m["robots"], 1);
    assert_eq!(m["instances_running"], 1);
    assert_eq!(m["ingest_latency_ms"]["count"], 1);
}
