// SPDX-License-Identifier: Apache-2.0

//! Cloud side of the offloading system. Robots connect over websockets,
//! the operator starts registry packages against them through the control
//! API, and results flow back over the robot's session or the XML web
//! service.

pub mod api;
mod gateway;
mod inbox;
mod worker;

pub use gateway::{
    AppFactory, FrameReceipt, Gateway, GatewayConfig, InstanceInfo, InstanceSnapshot,
    InstanceStatus, Outbound, OutputSlot, PackageOffer, RobotConn, RobotInfo, RobotSession,
};

use smartcloud_core::protocol::DecodeError;
pub use smartcloud_core::protocol::ECHO_SERVICE;
use smartcloud_core::registry::BindingError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("robot id {0:?} is already connected")]
    DuplicateRobotId(String),
    #[error("unknown robot {0:?}")]
    UnknownRobot(String),
    #[error("unknown package {0:?}")]
    UnknownPackage(String),
    #[error("topic {0} is not advertised")]
    MissingTopic(String),
    #[error("invalid binding: {0}")]
    InvalidBinding(BindingError),
    #[error("app failed to start: {0}")]
    AppInit(String),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("instance {0:?} is already stopped")]
    AlreadyStopped(String),
    #[error("unknown stream {0:?}")]
    UnknownStream(String),
    #[error("undecodable frame: {0}")]
    BadFrame(String),
    #[error("frame was dropped before a result was produced")]
    FrameDropped,
    #[error("app error: {0}")]
    App(String),
    #[error(transparent)]
    Decode(DecodeError),
}

pub use api::{router, serve};
