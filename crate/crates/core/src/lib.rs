// SPDX-License-Identifier: Apache-2.0

//! Core of the Smart Cloud offloading gateway: the rosbridge-style protocol
//! and session routing, the package registry, the offloadable apps, the
//! web-service result path, measurement helpers and the desk-scale world
//! model used by the simulator.

pub mod apps;
pub mod geometry;
pub mod metrics;
pub mod protocol;
pub mod registry;
pub mod scalar;
pub mod simnet;
pub mod webservice;

pub use scalar::Scalar;

pub type Pose = geometry::Pose2D<f64>;
pub type Pose32 = geometry::Pose2D<f32>;
pub type Scan = geometry::LaserScan2D<f64>;
pub type Scan32 = geometry::LaserScan2D<f32>;
pub type Grid = apps::grid::OccupancyGrid<f64>;
pub type Grid32 = apps::grid::OccupancyGrid<f32>;
pub type World = simnet::World2D<f64>;
pub type World32 = simnet::World2D<f32>;
pub type Lidar = simnet::LidarConfig<f64>;
pub type LatencySummary = metrics::Summary<f64>;
