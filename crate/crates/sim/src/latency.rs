// SPDX-License-Identifier: Apache-2.0

//! Echo round trips against the gateway's built-in echo service.

use std::net::SocketAddr;
use std::time::Duration;

use serde_json::{json, Value};
use smartcloud_core::metrics::{record_rtt, LatencySample, MonotonicClock};
use smartcloud_core::protocol::{ProtocolMessage, TopicName, ECHO_SERVICE};

use crate::client::{RosLink, RunError};

/// Sends `count` sequential echo calls over a fresh link as `robot` and
/// timestamps each exchange on the client clock. `injected` is the nominal
/// delay the link adds per round trip.
pub async fn echo_round_trips(
    addr: SocketAddr,
    robot: &str,
    count: usize,
    injected: Duration,
) -> Result<Vec<LatencySample>, RunError> {
    let mut link = RosLink::connect(addr, robot, "ros").await?;
    let service = TopicName::new(ECHO_SERVICE).expect("valid service name");
    let clock = MonotonicClock::new();
    let injected_ns = injected.as_nanos() as u64;
    let mut samples = Vec::with_capacity(count);
    for k in 0..count {
        let id = format!("echo-{k}");
        let call = ProtocolMessage::CallService {
            id: Some(id.clone()),
            service: service.clone(),
            service_type: None,
            args: Some(json!({ "seq": k })),
        };
        let sent = clock.now_ns();
        link.send(&call).await?;
        let reply = link
            .recv_matching(
                Duration::from_secs(10),
                "echo response",
                |m| matches!(m, ProtocolMessage::ServiceResponse { id: Some(r), .. } if *r == id),
            )
            .await?;
        let received = clock.now_ns();
        let ProtocolMessage::ServiceResponse { values, result, .. } = reply else {
            unreachable!("matched a service response");
        };
        if !result {
            return Err(RunError::Protocol(format!("echo failed: {values:?}")));
        }
        let processing = values
            .as_ref()
            .and_then(|v| v.get("processing_ns"))
            .and_then(Value::as_u64)
            .ok_or_else(|| RunError::Protocol("echo response lacks processing_ns".into()))?;
        samples.push(
            record_rtt(sent, received, processing, injected_ns)
                .map_err(|e| RunError::Protocol(e.to_string()))?,
        );
    }
    link.close().await;
    Ok(samples)
}
