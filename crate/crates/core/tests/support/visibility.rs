// SPDX-License-Identifier: Apache-2.0

//! Exhaustive ray-march oracle for which grid cells a set of scans could see.

use smartcloud_core::geometry::Pose2D;
use smartcloud_core::simnet::{LidarConfig, World2D};
use smartcloud_core::Scalar;

/// Ground truth for one grid cell as seen by an exhaustive ray-march.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Unseen,
    Free,
    Occupied,
}

/// Axis-aligned grid description used by the visibility oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub width: usize,
    pub height: usize,
    pub resolution: T,
    pub origin_x: T,
    pub origin_y: T,
}

impl<T: Scalar> GridSpec<T> {
    fn cell_of(&self, x: T, y: T) -> Option<(usize, usize)> {
        let i = ((x - self.origin_x) / self.resolution).floor().to_i64()?;
        let j = ((y - self.origin_y) / self.resolution).floor().to_i64()?;
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    fn cell_box(&self, i: usize, j: usize) -> (T, T, T, T) {
        let r = self.resolution;
        let x0 = self.origin_x + T::from_usize(i).unwrap_or_else(T::zero) * r;
        let y0 = self.origin_y + T::from_usize(j).unwrap_or_else(T::zero) * r;
        (x0, y0, x0 + r, y0 + r)
    }

    /// True if any wall passes through the cell.
    pub fn cell_has_wall(&self, world: &World2D<T>, i: usize, j: usize) -> bool {
        let (x0, y0, x1, y1) = self.cell_box(i, j);
        world.walls().iter().any(|w| w.touches_box(x0, y0, x1, y1))
    }
}

/// Which cells the scans from `poses` could observe, labelled with the
/// world's ground truth. Each beam is marched in steps of an eighth of a
/// cell up to its true range; every cell it enters is visible.
pub fn visible_cells<T: Scalar>(
    world: &World2D<T>,
    poses: &[Pose2D<T>],
    lidar: &LidarConfig<T>,
    grid: &GridSpec<T>,
) -> Vec<Visibility> {
    let mut seen = vec![false; grid.width * grid.height];
    // the mapper never updates the cell the sensor stands in
    let mut mark = |c: Option<(usize, usize)>, sensor: (usize, usize)| match c {
        Some((i, j)) if (i, j) != sensor => seen[j * grid.width + i] = true,
        _ => {}
    };
    let step = grid.resolution / T::lit(8.0);
    for pose in poses {
        let Some(sensor) = grid.cell_of(pose.x, pose.y) else {
            continue;
        };
        for b in 0..lidar.beams {
            let heading = pose.theta
                + lidar.angle_min
                + lidar.angle_increment * T::from_usize(b).unwrap_or_else(T::zero);
            let reach = match world.cast(pose.x, pose.y, heading) {
                Some(r) if r <= lidar.range_max => r,
                _ => lidar.range_max,
            };
            if reach < lidar.range_min {
                continue;
            }
            let (sin, cos) = heading.sin_cos();
            let mut d = step;
            while d < reach {
                mark(grid.cell_of(pose.x + cos * d, pose.y + sin * d), sensor);
                d = d + step;
            }
            mark(
                grid.cell_of(pose.x + cos * reach, pose.y + sin * reach),
                sensor,
            );
        }
    }
    (0..grid.width * grid.height)
        .map(|k| {
            let (i, j) = (k % grid.width, k / grid.width);
            if !seen[k] {
                Visibility::Unseen
            } else if grid.cell_has_wall(world, i, j) {
                Visibility::Occupied
            } else {
                Visibility::Free
            }
        })
        .collect()
}
