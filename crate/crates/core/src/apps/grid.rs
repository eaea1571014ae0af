// SPDX-License-Identifier: Apache-2.0

//! Log-odds occupancy grid with pose-known ray updates.

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{Beam, LaserScan2D, Pose2D};
use crate::scalar::Scalar;

/// Log-odds increments, clamp bounds and labelling thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOddsParams<T> {
    pub l_free: T,
    pub l_occ: T,
    pub l_min: T,
    pub l_max: T,
    /// Cells with p above this are labelled occupied.
    pub occupied_above: T,
    /// Cells with p below this are labelled free.
    pub free_below: T,
}

impl<T: Scalar> Default for LogOddsParams<T> {
    fn default() -> Self {
        Self {
            l_free: T::lit(-0.4),
            l_occ: T::lit(0.85),
            l_min: T::lit(-4.0),
            l_max: T::lit(4.0),
            occupied_above: T::lit(0.65),
            free_below: T::lit(0.35),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("pose ({x}, {y}) lies outside the grid")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("grid dimensions must be positive and resolution > 0")]
    BadDimensions,
    #[error("snapshot decode failed: {0}")]
    BadSnapshot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    width: usize,
    height: usize,
    resolution: T,
    origin: Pose2D<T>,
    cells: Vec<T>,
    params: LogOddsParams<T>,
}

pub fn probability<T: Scalar>(log_odds: T) -> T {
    T::one() / (T::one() + (-log_odds).exp())
}

/// Binary Shannon entropy in bits of a cell holding `log_odds`.
pub fn cell_entropy_bits<T: Scalar>(log_odds: T) -> T {
    let p = probability(log_odds);
    let q = T::one() - p;
    let term = |x: T| {
        if x > T::zero() {
            -x * x.log2()
        } else {
            T::zero()
        }
    };
    term(p) + term(q)
}

impl<T: Scalar> OccupancyGrid<T> {
    pub fn new(
        width: usize,
        height: usize,
        resolution: T,
        origin: Pose2D<T>,
        params: LogOddsParams<T>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 || !(resolution > T::zero()) {
            return Err(GridError::BadDimensions);
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![T::zero(); width * height],
            params,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D<T> {
        self.origin
    }

    pub fn params(&self) -> &LogOddsParams<T> {
        &self.params
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn log_odds(&self, i: usize, j: usize) -> T {
        self.cells[j * self.width + i]
    }

    pub fn set_log_odds(&mut self, i: usize, j: usize, value: T) {
        let v = value.max(self.params.l_min).min(self.params.l_max);
        self.cells[j * self.width + i] = v;
    }

    pub fn probability(&self, i: usize, j: usize) -> T {
        probability(self.log_odds(i, j))
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        let p = self.probability(i, j);
        if p > self.params.occupied_above {
            CellState::Occupied
        } else if p < self.params.free_below {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    /// Continuous cell coordinates of a world point (not floored).
    fn to_grid(&self, x: T, y: T) -> (T, T) {
        let dx = x - self.origin.x;
        let dy = y - self.origin.y;
        let (s, c) = self.origin.theta.sin_cos();
        (
            (c * dx + s * dy) / self.resolution,
            (c * dy - s * dx) / self.resolution,
        )
    }

    /// Integer cell of a world point; may lie outside the grid.
    pub fn world_to_cell(&self, x: T, y: T) -> (i64, i64) {
        let (gx, gy) = self.to_grid(x, y);
        (
            gx.floor().to_i64().unwrap_or(i64::MIN),
            gy.floor().to_i64().unwrap_or(i64::MIN),
        )
    }

    /// World coordinates of a cell centre.
    pub fn cell_center(&self, i: usize, j: usize) -> (T, T) {
        let half = T::lit(0.5);
        let lx = (T::from_usize(i).unwrap_or_else(T::zero) + half) * self.resolution;
        let ly = (T::from_usize(j).unwrap_or_else(T::zero) + half) * self.resolution;
        self.origin.transform_point(lx, ly)
    }

    pub fn contains_cell(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    fn bump(&mut self, i: i64, j: i64, delta: T) {
        let idx = j as usize * self.width + i as usize;
        let v = self.cells[idx] + delta;
        self.cells[idx] = v.max(self.params.l_min).min(self.params.l_max);
    }

    /// Integrates one scan taken from `pose`.
    ///
    /// Cells strictly between the sensor cell and the beam endpoint get
    /// `l_free`; the endpoint of a returning beam gets `l_occ`. A no-return
    /// beam clears up to `range_max` without marking its endpoint. The
    /// sensor's own cell is left untouched.
    pub fn update(&mut self, pose: &Pose2D<T>, scan: &LaserScan2D<T>) -> Result<(), GridError> {
        let start = self.world_to_cell(pose.x, pose.y);
        if !self.contains_cell(start.0, start.1) {
            return Err(GridError::PoseOutOfBounds {
                x: pose.x.to_f64_lossy(),
                y: pose.y.to_f64_lossy(),
            });
        }
        for (angle, beam) in scan.beams() {
            let (range, hit) = match beam {
                Beam::Hit(r) => (r, true),
                Beam::NoReturn => (scan.range_max, false),
                Beam::Invalid => continue,
            };
            let heading = pose.theta + angle;
            let ex = pose.x + range * heading.cos();
            let ey = pose.y + range * heading.sin();
            let end = self.world_to_cell(ex, ey);
            self.trace(start, end, hit);
        }
        Ok(())
    }

    /// Bresenham walk from `start` to `end`; stops once the ray leaves the grid.
    fn trace(&mut self, start: (i64, i64), end: (i64, i64), hit: bool) {
        let (l_free, l_occ) = (self.params.l_free, self.params.l_occ);
        let (mut x, mut y) = start;
        let dx = (end.0 - x).abs();
        let dy = -(end.1 - y).abs();
        let sx = if x < end.0 { 1 } else { -1 };
        let sy = if y < end.1 { 1 } else { -1 };
        let mut err = dx + dy;
        while (x, y) != end {
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
            if !self.contains_cell(x, y) {
                return;
            }
            if (x, y) != end {
                self.bump(x, y, l_free);
            }
        }
        if hit {
            self.bump(end.0, end.1, l_occ);
        }
    }

    /// Sum of per-cell binary entropies in bits.
    pub fn entropy(&self) -> T {
        self.cells
            .iter()
            .fold(T::zero(), |acc, &l| acc + cell_entropy_bits(l))
    }

    pub fn count_states(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for j in 0..self.height {
            for i in 0..self.width {
                match self.state(i, j) {
                    CellState::Free => counts.0 += 1,
                    CellState::Occupied => counts.1 += 1,
                    CellState::Unknown => counts.2 += 1,
                }
            }
        }
        counts
    }

    /// Cell probabilities quantized to bytes, row-major from cell (0,0).
    pub fn quantized(&self) -> Vec<u8> {
        self.cells
            .iter()
            .map(|&l| {
                let p = probability(l).to_f64_lossy();
                (p * 255.0).round().clamp(0.0, 255.0) as u8
            })
            .collect()
    }
}

/// Free function form used by the app layer.
pub fn occupancy_update<T: Scalar>(
    grid: &mut OccupancyGrid<T>,
    pose: &Pose2D<T>,
    scan: &LaserScan2D<T>,
) -> Result<(), GridError> {
    grid.update(pose, scan)
}

pub fn map_entropy<T: Scalar>(grid: &OccupancyGrid<T>) -> T {
    grid.entropy()
}

pub const SNAPSHOT_MAGIC: &[u8; 6] = b"SCMAP\0";
pub const SNAPSHOT_VERSION: u8 = 1;
pub const SNAPSHOT_FORMAT: &str = "smartcloud-map/1";

/// Decoded map snapshot: header plus 8-bit probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSnapshot {
    pub width: u32,
    pub height: u32,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub cells: Vec<u8>,
}

impl MapSnapshot {
    pub fn from_grid<T: Scalar>(grid: &OccupancyGrid<T>) -> Self {
        let o = grid.origin();
        Self {
            width: grid.width() as u32,
            height: grid.height() as u32,
            resolution: grid.resolution().to_f64_lossy(),
            origin: [
                o.x.to_f64_lossy(),
                o.y.to_f64_lossy(),
                o.theta.to_f64_lossy(),
            ],
            cells: grid.quantized(),
        }
    }

    /// Binary snapshot file layout (little endian):
    /// magic `SCMAP\0`, version u8, width u32, height u32, resolution f64,
    /// origin x/y/theta f64, then `width * height` probability bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(51 + self.cells.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(SNAPSHOT_VERSION);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for v in self.origin {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.cells);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GridError> {
        let bad = |m: &str| GridError::BadSnapshot(m.to_owned());
        let header = bytes.get(..47).ok_or_else(|| bad("truncated header"))?;
        if &header[..6] != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        if header[6] != SNAPSHOT_VERSION {
            return Err(bad("unsupported version"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let width = u32_at(7);
        let height = u32_at(11);
        let resolution = f64_at(15);
        let origin = [f64_at(23), f64_at(31), f64_at(39)];
        let cells = bytes[47..].to_vec();
        if cells.len() != width as usize * height as usize {
            return Err(bad("cell count does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    /// Labels cell `(i, j)` from its quantized probability.
    pub fn state(&self, i: usize, j: usize, params: &LogOddsParams<f64>) -> CellState {
        let p = f64::from(self.cells[j * self.width as usize + i]) / 255.0;
        if p > params.occupied_above {
            CellState::Occupied
        } else if p < params.free_below {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    /// JSON form carried on the `map` result channel.
    pub fn to_json(&self) -> Value {
        json!({
            "format": SNAPSHOT_FORMAT,
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "origin": self.origin,
            "cells": base64::engine::general_purpose::STANDARD.encode(&self.cells),
        })
    }

    pub fn from_json(value: &Value) -> Result<Self, GridError> {
        let bad = |m: &str| GridError::BadSnapshot(m.to_owned());
        if value.get("format").and_then(Value::as_str) != Some(SNAPSHOT_FORMAT) {
            return Err(bad("unexpected format tag"));
        }
        let dim = |k: &str| {
            value
                .get(k)
                .and_then(Value::as_u64)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| bad(k))
        };
        let width = dim("width")?;
        let height = dim("height")?;
        let resolution = value
            .get("resolution")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("resolution"))?;
        let origin: [f64; 3] =
            serde_json::from_value(value.get("origin").cloned().unwrap_or(Value::Null))
                .map_err(|_| bad("origin"))?;
        let cells = value
            .get("cells")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("cells"))
            .and_then(|s| {
                base64::engine::general_purpose::STANDARD
                    .decode(s)
                    .map_err(|e| GridError::BadSnapshot(e.to_string()))
            })?;
        if cells.len() != width as usize * height as usize {
            return Err(bad("cell count does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }
}
