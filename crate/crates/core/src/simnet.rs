// SPDX-License-Identifier: Apache-2.0

//! Desk-scale world model: wall segments, a planar lidar, scripted robot
//! paths, and the declarative documents that describe them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LaserScan2D, Pose2D};
use crate::scalar::Scalar;

pub const WORLD_SCHEMA: &str = "smartcloud-world/1";
pub const SCENARIO_SCHEMA: &str = "smartcloud-scenario/1";

/// The 10 x 10 m office used by the default scenarios.
pub const OFFICE_WORLD: &str = include_str!("../config/office_world.json");
/// Full circuit of the office; the camera robot ends on the target frame.
pub const OFFICE_SCENARIO: &str = include_str!("../config/office_scenario.json");
/// Same circuit with frames that never show the target.
pub const CORRIDOR_SCENARIO: &str = include_str!("../config/corridor_scenario.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("pose ({x}, {y}) is outside the world bounds")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid proxy config: {0}")]
    InvalidProxy(String),
    #[error("invalid lidar config: {0}")]
    InvalidLidar(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> Segment<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Distance along the ray `origin + t * (cos, sin)` to this segment, if
    /// the ray meets it at some `t >= 0`. Collinear overlaps report the
    /// nearest endpoint that lies on the ray.
    pub fn ray_distance(&self, ox: T, oy: T, cos: T, sin: T) -> Option<T> {
        let ex = self.x2 - self.x1;
        let ey = self.y2 - self.y1;
        let denom = cos * ey - sin * ex;
        let wx = self.x1 - ox;
        let wy = self.y1 - oy;
        let eps = T::lit(1e-12);
        if denom.abs() < eps {
            // parallel; only collinear segments can be hit
            if (wx * sin - wy * cos).abs() > eps {
                return None;
            }
            let t1 = wx * cos + wy * sin;
            let t2 = (self.x2 - ox) * cos + (self.y2 - oy) * sin;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if hi < T::zero() {
                return None;
            }
            return Some(lo.max(T::zero()));
        }
        let t = (wx * ey - wy * ex) / denom;
        let s = (wx * sin - wy * cos) / denom;
        if t >= T::zero() && s >= -eps && s <= T::one() + eps {
            Some(t)
        } else {
            None
        }
    }

    /// True if the segment touches the closed axis-aligned box.
    pub fn touches_box(&self, min_x: T, min_y: T, max_x: T, max_y: T) -> bool {
        // Liang-Barsky clip of the segment against the box
        let dx = self.x2 - self.x1;
        let dy = self.y2 - self.y1;
        let mut t0 = T::zero();
        let mut t1 = T::one();
        let checks = [
            (-dx, self.x1 - min_x),
            (dx, max_x - self.x1),
            (-dy, self.y1 - min_y),
            (dy, max_y - self.y1),
        ];
        for (p, q) in checks {
            if p == T::zero() {
                if q < T::zero() {
                    return false;
                }
                continue;
            }
            let r = q / p;
            if p < T::zero() {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    pub min_x: T,
    pub min_y: T,
    pub max_x: T,
    pub max_y: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldObject<T> {
    pub label: String,
    pub x: T,
    pub y: T,
    pub trigger_radius: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World2D<T> {
    walls: Vec<Segment<T>>,
    bounds: Bounds<T>,
    objects: Vec<WorldObject<T>>,
}

impl<T: Scalar> World2D<T> {
    pub fn new(
        walls: Vec<Segment<T>>,
        bounds: Bounds<T>,
        objects: Vec<WorldObject<T>>,
    ) -> Result<Self, SimError> {
        if !(bounds.max_x > bounds.min_x && bounds.max_y > bounds.min_y) {
            return Err(SimError::InvalidWorld("empty bounds".into()));
        }
        for (k, w) in walls.iter().enumerate() {
            if !bounds.contains(w.x1, w.y1) || !bounds.contains(w.x2, w.y2) {
                return Err(SimError::InvalidWorld(format!(
                    "wall {k} leaves the bounds"
                )));
            }
        }
        for o in &objects {
            if !bounds.contains(o.x, o.y) {
                return Err(SimError::InvalidWorld(format!(
                    "object {:?} outside",
                    o.label
                )));
            }
            if !(o.trigger_radius > T::zero()) {
                return Err(SimError::InvalidWorld(format!(
                    "object {:?} needs a positive trigger radius",
                    o.label
                )));
            }
        }
        Ok(Self {
            walls,
            bounds,
            objects,
        })
    }

    pub fn walls(&self) -> &[Segment<T>] {
        &self.walls
    }

    pub fn bounds(&self) -> Bounds<T> {
        self.bounds
    }

    pub fn objects(&self) -> &[WorldObject<T>] {
        &self.objects
    }

    /// Nearest wall along a ray, if any.
    pub fn cast(&self, ox: T, oy: T, heading: T) -> Option<T> {
        let (sin, cos) = heading.sin_cos();
        self.walls
            .iter()
            .filter_map(|w| w.ray_distance(ox, oy, cos, sin))
            .fold(None, |best: Option<T>, t| match best {
                Some(b) if b <= t => Some(b),
                _ => Some(t),
            })
    }

    /// Objects whose trigger circle contains the point.
    pub fn objects_near(&self, x: T, y: T) -> impl Iterator<Item = &WorldObject<T>> {
        self.objects.iter().filter(move |o| {
            let dx = o.x - x;
            let dy = o.y - y;
            (dx * dx + dy * dy).sqrt() <= o.trigger_radius
        })
    }
}

/// Planar scanner: `beams` rays starting at `angle_min`, `angle_increment`
/// apart, relative to the robot heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig<T> {
    pub angle_min: T,
    pub angle_increment: T,
    pub beams: usize,
    pub range_min: T,
    pub range_max: T,
}

impl<T: Scalar> LidarConfig<T> {
    /// Full circle with the given beam count.
    pub fn full_circle(beams: usize, range_min: T, range_max: T) -> Self {
        let n = T::from_usize(beams.max(1)).unwrap_or_else(T::one);
        Self {
            angle_min: -T::PI(),
            angle_increment: (T::PI() + T::PI()) / n,
            beams,
            range_min,
            range_max,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.beams == 0 {
            return Err(SimError::InvalidLidar("no beams".into()));
        }
        if !(self.angle_increment > T::zero()) {
            return Err(SimError::InvalidLidar("increment must be positive".into()));
        }
        if !(self.range_min >= T::zero() && self.range_max > self.range_min) {
            return Err(SimError::InvalidLidar("bad range limits".into()));
        }
        Ok(())
    }
}

/// Exact ray-cast scan. Beams that meet nothing within `range_max` read NaN.
pub fn simulate_scan<T: Scalar>(
    world: &World2D<T>,
    pose: &Pose2D<T>,
    lidar: &LidarConfig<T>,
) -> Result<LaserScan2D<T>, SimError> {
    lidar.validate()?;
    if !world.bounds.contains(pose.x, pose.y) {
        return Err(SimError::PoseOutOfBounds {
            x: pose.x.to_f64_lossy(),
            y: pose.y.to_f64_lossy(),
        });
    }
    let ranges = (0..lidar.beams)
        .map(|i| {
            let rel =
                lidar.angle_min + lidar.angle_increment * T::from_usize(i).unwrap_or_else(T::zero);
            match world.cast(pose.x, pose.y, pose.theta + rel) {
                Some(r) if r <= lidar.range_max => r,
                _ => T::nan(),
            }
        })
        .collect();
    LaserScan2D::from_start(
        lidar.angle_min,
        lidar.angle_increment,
        lidar.range_min,
        lidar.range_max,
        ranges,
    )
    .map_err(|e| SimError::InvalidLidar(e.to_string()))
}

/// Poses every `step` metres along the polyline, heading along the current
/// leg. The final waypoint is always included.
pub fn path_poses<T: Scalar>(waypoints: &[[T; 2]], step: T) -> Vec<Pose2D<T>> {
    let mut out = Vec::new();
    if waypoints.is_empty() || !(step > T::zero()) {
        return out;
    }
    let mut heading = T::zero();
    for leg in waypoints.windows(2) {
        let [x0, y0] = leg[0];
        let [x1, y1] = leg[1];
        let dx = x1 - x0;
        let dy = y1 - y0;
        let len = (dx * dx + dy * dy).sqrt();
        if len == T::zero() {
            continue;
        }
        heading = dy.atan2(dx);
        let mut d = T::zero();
        while d < len {
            let f = d / len;
            out.push(Pose2D::new(x0 + dx * f, y0 + dy * f, heading));
            d = d + step;
        }
    }
    let [xl, yl] = waypoints[waypoints.len() - 1];
    out.push(Pose2D::new(xl, yl, heading));
    out
}

// ---- declarative documents (always f64) ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub label: String,
    pub position: [f64; 2],
    pub trigger_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDoc {
    pub schema: String,
    /// `[min_x, min_y, max_x, max_y]`
    pub bounds: [f64; 4],
    /// `[x1, y1, x2, y2]`
    pub walls: Vec<[f64; 4]>,
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
}

impl WorldDoc {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let doc: Self =
            serde_json::from_str(text).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
        if doc.schema != WORLD_SCHEMA {
            return Err(SimError::InvalidWorld(format!(
                "unsupported schema {:?}",
                doc.schema
            )));
        }
        Ok(doc)
    }

    pub fn build<T: Scalar>(&self) -> Result<World2D<T>, SimError> {
        let l = T::lit;
        let [a, b, c, d] = self.bounds;
        World2D::new(
            self.walls
                .iter()
                .map(|&[x1, y1, x2, y2]| Segment::new(l(x1), l(y1), l(x2), l(y2)))
                .collect(),
            Bounds {
                min_x: l(a),
                min_y: l(b),
                max_x: l(c),
                max_y: l(d),
            },
            self.objects
                .iter()
                .map(|o| WorldObject {
                    label: o.label.clone(),
                    x: l(o.position[0]),
                    y: l(o.position[1]),
                    trigger_radius: l(o.trigger_radius),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarDoc {
    pub beams: usize,
    pub range_min: f64,
    pub range_max: f64,
}

impl LidarDoc {
    pub fn config<T: Scalar>(&self) -> LidarConfig<T> {
        LidarConfig::full_circle(self.beams, T::lit(self.range_min), T::lit(self.range_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    /// Fixture name in the classifier manifest.
    pub fixture: String,
    /// Scan tick at which the camera robot posts the frame.
    pub at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub schema: String,
    pub waypoints: Vec<[f64; 2]>,
    /// Metres per second along the path.
    pub speed: f64,
    /// Scans per second; one pose per scan.
    pub scan_rate_hz: f64,
    pub lidar: LidarDoc,
    pub frames: Vec<FrameDoc>,
    pub target: String,
    pub threshold: f64,
    /// Scan ticks between the lidar robot's detection polls.
    #[serde(default = "default_poll_every")]
    pub poll_every: u64,
}

fn default_poll_every() -> u64 {
    1
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let s: Self =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if s.schema != SCENARIO_SCHEMA {
            return Err(SimError::InvalidScenario(format!(
                "unsupported schema {:?}",
                s.schema
            )));
        }
        Ok(s)
    }

    pub fn validate<T: Scalar>(&self, world: &World2D<T>) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.waypoints.is_empty() {
            return bad("no waypoints".into());
        }
        for &[x, y] in &self.waypoints {
            if !world.bounds().contains(T::lit(x), T::lit(y)) {
                return bad(format!("waypoint ({x}, {y}) outside the world"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold must lie in (0, 1]".into());
        }
        if !(self.speed > 0.0 && self.scan_rate_hz > 0.0) {
            return bad("speed and scan rate must be positive".into());
        }
        if self.poll_every == 0 {
            return bad("poll_every must be positive".into());
        }
        self.lidar.config::<T>().validate()
    }

    /// Lidar poses, one per scan tick.
    pub fn poses<T: Scalar>(&self) -> Vec<Pose2D<T>> {
        let pts: Vec<[T; 2]> = self
            .waypoints
            .iter()
            .map(|&[x, y]| [T::lit(x), T::lit(y)])
            .collect();
        path_poses(&pts, T::lit(self.speed / self.scan_rate_hz))
    }
}

/// Link model for the network stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyConfig {
    /// Delay added in each direction, milliseconds.
    pub one_way_ms: f64,
    /// Standard deviation of the per-message delay, milliseconds.
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub drop: f64,
}

impl ProxyConfig {
    pub fn new(one_way_ms: f64, jitter_ms: f64, drop: f64) -> Result<Self, SimError> {
        let c = Self {
            one_way_ms,
            jitter_ms,
            drop,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn passthrough() -> Self {
        Self {
            one_way_ms: 0.0,
            jitter_ms: 0.0,
            drop: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.one_way_ms >= 0.0 && self.jitter_ms >= 0.0) {
            return Err(SimError::InvalidProxy("delays must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.drop) {
            return Err(SimError::InvalidProxy("drop must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn rtt_ms(&self) -> f64 {
        2.0 * self.one_way_ms
    }
}
