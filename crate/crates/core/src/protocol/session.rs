// SPDX-License-Identifier: Apache-2.0

//! Per-robot session state machine.
//!
//! A session sits between one robot connection and any number of cloud-side
//! consumers (app instances). Every inbound frame goes through
//! [`SessionState::step`], which updates the tables and returns the routing
//! effects the caller must carry out. Callers hold per-session exclusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::json;

use super::message::{ProtocolMessage, TopicName};

pub const ROSAPI_TOPICS: &str = "/rosapi/topics";
/// Gateway-hosted service answering with its own processing time.
pub const ECHO_SERVICE: &str = "/smartcloud/echo";
pub const UNKNOWN_TYPE: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Ros,
    NonRos,
}

/// Where an effect is aimed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    /// The robot on the other end of this session.
    Session(SessionId),
    /// A cloud-side consumer, identified by its instance id.
    Consumer(String),
    /// A cloud-hosted service provider.
    Service(TopicName),
}

/// Which side of the gateway a frame came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    FromRobot,
    FromCloud(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectKind {
    /// Topic data for a current subscriber.
    Deliver,
    RegisterRoute,
    UnregisterRoute,
    /// A reply sent back to whoever asked.
    Respond,
    /// A request handed across to the other side (service call, or the
    /// first/last cloud subscription on a robot topic).
    Forward,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEffect {
    pub kind: EffectKind,
    pub target: Endpoint,
    pub payload: ProtocolMessage,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Subscription {
    pub declared_type: Option<String>,
    pub consumers: BTreeSet<Endpoint>,
}

impl Subscription {
    fn has_cloud_consumer(&self) -> bool {
        self.consumers
            .iter()
            .any(|c| matches!(c, Endpoint::Consumer(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingCall {
    pub service: TopicName,
    pub caller: Endpoint,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SessionConfig {
    /// Reject publishes on topics the robot never advertised.
    pub strict_advertise: bool,
}

/// Result of one transition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub effects: Vec<RouteEffect>,
    pub diagnostics: Vec<String>,
}

impl Step {
    pub fn rejected(&self) -> bool {
        self.effects.iter().any(|e| e.kind == EffectKind::Reject)
    }

    fn push(&mut self, kind: EffectKind, target: Endpoint, payload: ProtocolMessage) {
        self.effects.push(RouteEffect {
            kind,
            target,
            payload,
            reason: None,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    id: SessionId,
    mode: SessionMode,
    advertised: BTreeMap<TopicName, String>,
    subscriptions: BTreeMap<TopicName, Subscription>,
    pending: BTreeMap<String, PendingCall>,
    call_counter: u64,
}

impl SessionState {
    pub fn new(id: SessionId, mode: SessionMode) -> Self {
        Self {
            id,
            mode,
            advertised: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            pending: BTreeMap::new(),
            call_counter: 0,
        }
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn advertised(&self) -> &BTreeMap<TopicName, String> {
        &self.advertised
    }

    pub fn subscriptions(&self) -> &BTreeMap<TopicName, Subscription> {
        &self.subscriptions
    }

    pub fn pending_calls(&self) -> &BTreeMap<String, PendingCall> {
        &self.pending
    }

    /// Topics at least one cloud consumer is subscribed to.
    pub fn cloud_subscribed_topics(&self) -> BTreeSet<TopicName> {
        self.subscriptions
            .iter()
            .filter(|(_, s)| s.has_cloud_consumer())
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// Next server-generated correlation id, `<session id>:<counter>`.
    pub fn next_call_id(&mut self) -> String {
        self.call_counter += 1;
        format!("{}:{}", self.id, self.call_counter)
    }

    pub fn step(
        &mut self,
        inbound: ProtocolMessage,
        origin: &Origin,
        config: &SessionConfig,
    ) -> Step {
        let mut step = Step::default();
        match origin {
            Origin::FromRobot => self.step_from_robot(inbound, config, &mut step),
            Origin::FromCloud(consumer) => self.step_from_cloud(inbound, consumer, &mut step),
        }
        step
    }

    fn session(&self) -> Endpoint {
        Endpoint::Session(self.id.clone())
    }

    fn reject(&self, step: &mut Step, target: Endpoint, msg: ProtocolMessage, reason: String) {
        step.effects.push(RouteEffect {
            kind: EffectKind::Reject,
            target,
            payload: msg,
            reason: Some(reason),
        });
    }

    fn step_from_robot(&mut self, msg: ProtocolMessage, config: &SessionConfig, step: &mut Step) {
        let me = self.session();
        match &msg {
            ProtocolMessage::Advertise {
                topic, msg_type, ..
            } => match self.advertised.get(topic) {
                Some(existing) if existing != msg_type && existing != UNKNOWN_TYPE => {
                    let reason =
                        format!("{topic} already advertised with type {existing}, not {msg_type}");
                    self.reject(step, me, msg, reason);
                }
                _ => {
                    self.advertised.insert(topic.clone(), msg_type.clone());
                }
            },
            ProtocolMessage::Unadvertise { topic, .. } => {
                if self.advertised.remove(topic).is_none() {
                    let reason = format!("{topic} was never advertised");
                    self.reject(step, me, msg, reason);
                }
            }
            ProtocolMessage::Publish { topic, .. } => {
                if !self.advertised.contains_key(topic) {
                    if config.strict_advertise {
                        let reason = format!("publish on unadvertised topic {topic}");
                        self.reject(step, me, msg, reason);
                        return;
                    }
                    tracing::warn!(session = %self.id, %topic, "implicit advertise");
                    step.diagnostics
                        .push(format!("implicit advertise of {topic} as {UNKNOWN_TYPE}"));
                    self.advertised
                        .insert(topic.clone(), UNKNOWN_TYPE.to_owned());
                }
                if let Some(sub) = self.subscriptions.get(topic) {
                    for consumer in &sub.consumers {
                        if matches!(consumer, Endpoint::Consumer(_)) {
                            step.push(EffectKind::Deliver, consumer.clone(), msg.clone());
                        }
                    }
                }
            }
            ProtocolMessage::Subscribe {
                topic, msg_type, ..
            } => {
                let sub = self.subscriptions.entry(topic.clone()).or_default();
                if sub.declared_type.is_none() {
                    sub.declared_type = msg_type.clone();
                }
                sub.consumers.insert(me.clone());
                step.push(EffectKind::RegisterRoute, me, msg);
            }
            ProtocolMessage::Unsubscribe { topic, .. } => {
                if self.remove_consumer(topic, &me) {
                    step.push(EffectKind::UnregisterRoute, me, msg);
                } else {
                    let reason = format!("{topic} is not subscribed by this session");
                    self.reject(step, me, msg, reason);
                }
            }
            ProtocolMessage::CallService {
                id,
                service,
                service_type,
                args,
            } => {
                let call_id = match id {
                    Some(id) => id.clone(),
                    None => self.next_call_id(),
                };
                if self.pending.contains_key(&call_id) {
                    let reason = format!("call id {call_id:?} already pending");
                    self.reject(step, me, msg, reason);
                    return;
                }
                if service.as_str() == ROSAPI_TOPICS {
                    let response = self.topics_response(call_id, service.clone());
                    step.push(EffectKind::Respond, me, response);
                    return;
                }
                self.pending.insert(
                    call_id.clone(),
                    PendingCall {
                        service: service.clone(),
                        caller: me,
                    },
                );
                let forwarded = ProtocolMessage::CallService {
                    id: Some(call_id),
                    service: service.clone(),
                    service_type: service_type.clone(),
                    args: args.clone(),
                };
                step.push(
                    EffectKind::Forward,
                    Endpoint::Service(service.clone()),
                    forwarded,
                );
            }
            ProtocolMessage::ServiceResponse { id, .. } => {
                let caller = id
                    .as_ref()
                    .and_then(|id| self.pending.get(id))
                    .filter(|p| p.caller != me)
                    .map(|p| p.caller.clone());
                match (caller, id) {
                    (Some(caller), Some(id)) => {
                        self.pending.remove(id);
                        step.push(EffectKind::Respond, caller, msg);
                    }
                    _ => {
                        let reason = "response does not match a pending cloud call".to_owned();
                        self.reject(step, me, msg, reason);
                    }
                }
            }
        }
    }

    fn step_from_cloud(&mut self, msg: ProtocolMessage, consumer: &str, step: &mut Step) {
        let me = self.session();
        let them = Endpoint::Consumer(consumer.to_owned());
        match &msg {
            ProtocolMessage::Subscribe {
                topic, msg_type, ..
            } => {
                let sub = self.subscriptions.entry(topic.clone()).or_default();
                let first = !sub.has_cloud_consumer();
                if sub.declared_type.is_none() {
                    sub.declared_type = msg_type.clone();
                }
                sub.consumers.insert(them.clone());
                step.push(EffectKind::RegisterRoute, them, msg.clone());
                if first {
                    let upstream = ProtocolMessage::subscribe(topic.clone(), msg_type.clone());
                    step.push(EffectKind::Forward, me, upstream);
                }
            }
            ProtocolMessage::Unsubscribe { topic, .. } => {
                if !self.remove_consumer(topic, &them) {
                    let reason = format!("{consumer} is not subscribed to {topic}");
                    self.reject(step, them, msg, reason);
                    return;
                }
                step.push(EffectKind::UnregisterRoute, them, msg.clone());
                let still_wanted = self
                    .subscriptions
                    .get(topic)
                    .is_some_and(Subscription::has_cloud_consumer);
                if !still_wanted {
                    step.push(
                        EffectKind::Forward,
                        me,
                        ProtocolMessage::unsubscribe(topic.clone()),
                    );
                }
            }
            ProtocolMessage::Publish { topic, .. } => {
                let robot_listens = self
                    .subscriptions
                    .get(topic)
                    .is_some_and(|s| s.consumers.contains(&me));
                if robot_listens {
                    step.push(EffectKind::Deliver, me, msg);
                }
            }
            ProtocolMessage::CallService {
                id,
                service,
                service_type,
                args,
            } => {
                let call_id = match id {
                    Some(id) => id.clone(),
                    None => self.next_call_id(),
                };
                if self.pending.contains_key(&call_id) {
                    let reason = format!("call id {call_id:?} already pending");
                    self.reject(step, them, msg, reason);
                    return;
                }
                self.pending.insert(
                    call_id.clone(),
                    PendingCall {
                        service: service.clone(),
                        caller: them,
                    },
                );
                let forwarded = ProtocolMessage::CallService {
                    id: Some(call_id),
                    service: service.clone(),
                    service_type: service_type.clone(),
                    args: args.clone(),
                };
                step.push(EffectKind::Forward, me, forwarded);
            }
            ProtocolMessage::ServiceResponse { id, .. } => {
                let answers_robot = id
                    .as_ref()
                    .and_then(|id| self.pending.get(id))
                    .is_some_and(|p| p.caller == me);
                match id {
                    Some(id) if answers_robot => {
                        self.pending.remove(id);
                        step.push(EffectKind::Respond, me, msg);
                    }
                    _ => {
                        let reason = "response does not match a pending robot call".to_owned();
                        self.reject(step, them, msg, reason);
                    }
                }
            }
            ProtocolMessage::Advertise { .. } | ProtocolMessage::Unadvertise { .. } => {
                let reason = "cloud-side advertise is not supported".to_owned();
                self.reject(step, them, msg, reason);
            }
        }
    }

    fn remove_consumer(&mut self, topic: &TopicName, who: &Endpoint) -> bool {
        let Some(sub) = self.subscriptions.get_mut(topic) else {
            return false;
        };
        if !sub.consumers.remove(who) {
            return false;
        }
        if sub.consumers.is_empty() {
            self.subscriptions.remove(topic);
        }
        true
    }

    fn topics_response(&self, id: String, service: TopicName) -> ProtocolMessage {
        let topics: Vec<&str> = self.advertised.keys().map(TopicName::as_str).collect();
        let types: Vec<&str> = self.advertised.values().map(String::as_str).collect();
        ProtocolMessage::ServiceResponse {
            id: Some(id),
            service,
            values: Some(json!({ "topics": topics, "types": types })),
            result: true,
        }
    }

    /// Checks the structural invariants; used by tests.
    pub fn is_consistent(&self) -> bool {
        self.subscriptions.values().all(|s| !s.consumers.is_empty())
            && self.advertised.values().all(|t| !t.is_empty())
    }
}

/// Functional form of [`SessionState::step`].
pub fn step_session(
    mut state: SessionState,
    inbound: ProtocolMessage,
    origin: &Origin,
    config: &SessionConfig,
) -> (SessionState, Step) {
    let step = state.step(inbound, origin, config);
    (state, step)
}
