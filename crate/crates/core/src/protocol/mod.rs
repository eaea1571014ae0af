// SPDX-License-Identifier: Apache-2.0

//! Rosbridge-style wire protocol: codec and session state machine.

mod message;
mod session;

pub use message::{decode, encode, DecodeError, OpKind, ProtocolMessage, TopicName};
pub use session::{
    step_session, EffectKind, Endpoint, Origin, PendingCall, RouteEffect, SessionConfig, SessionId,
    SessionMode, SessionState, Step, Subscription, ECHO_SERVICE, ROSAPI_TOPICS, UNKNOWN_TYPE,
};
