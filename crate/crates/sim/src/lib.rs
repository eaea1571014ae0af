// SPDX-License-Identifier: Apache-2.0

//! Simulated robots, a delay-injecting network proxy and the two-robot
//! mission runner used to exercise the gateway end to end.

pub mod client;
pub mod latency;
pub mod proxy;
pub mod scenario;
pub mod stream;

pub use client::{Http, RosLink, RunError};
pub use latency::echo_round_trips;
pub use proxy::{run_proxy, run_ws_proxy, LinkModel, ProxyError, ProxyHandle};
pub use scenario::{
    events_to_ndjson, run_scenario, ScenarioEvent, ScenarioOptions, ScenarioOutcome, StopReason,
};
pub use stream::{stream_mapping, MappingMode, StreamOptions, StreamReport};
