// SPDX-License-Identifier: Apache-2.0

//! Planar poses and laser scans shared by the mapper and the simulator.

use thiserror::Error;

use crate::scalar::Scalar;

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut a = angle % two_pi;
    if a <= -T::PI() {
        a = a + two_pi;
    } else if a > T::PI() {
        a = a - two_pi;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    /// Heading in radians, always within (-pi, pi].
    pub theta: T,
}

impl<T: Scalar> Pose2D<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Maps a point from this pose's frame into the parent frame.
    pub fn transform_point(&self, px: T, py: T) -> (T, T) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("angle increment must be positive and finite")]
    BadIncrement,
    #[error("expected {expected} ranges for the angular span, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("range limits must satisfy 0 <= min < max")]
    BadRangeLimits,
}

/// One planar sweep. A range that is NaN, infinite or above `range_max`
/// means the beam saw nothing; ranges below `range_min` are invalid and
/// skipped by consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan2D<T> {
    pub angle_min: T,
    pub angle_max: T,
    pub angle_increment: T,
    pub range_min: T,
    pub range_max: T,
    pub ranges: Vec<T>,
}

/// Classification of one beam reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beam<T> {
    Hit(T),
    NoReturn,
    Invalid,
}

impl<T: Scalar> LaserScan2D<T> {
    pub fn new(
        angle_min: T,
        angle_max: T,
        angle_increment: T,
        range_min: T,
        range_max: T,
        ranges: Vec<T>,
    ) -> Result<Self, ScanError> {
        let scan = Self {
            angle_min,
            angle_max,
            angle_increment,
            range_min,
            range_max,
            ranges,
        };
        scan.validate()?;
        Ok(scan)
    }

    /// Builds a scan whose `angle_max` is implied by the number of ranges.
    pub fn from_start(
        angle_min: T,
        angle_increment: T,
        range_min: T,
        range_max: T,
        ranges: Vec<T>,
    ) -> Result<Self, ScanError> {
        let steps = T::from_usize(ranges.len().saturating_sub(1)).unwrap_or_else(T::zero);
        Self::new(
            angle_min,
            angle_min + angle_increment * steps,
            angle_increment,
            range_min,
            range_max,
            ranges,
        )
    }

    /// Beam count implied by the angular span, rounded to the nearest
    /// step so that single-precision spans do not lose a beam.
    pub fn expected_len(angle_min: T, angle_max: T, increment: T) -> usize {
        let span = ((angle_max - angle_min) / increment).round();
        span.to_usize().unwrap_or(0) + 1
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if !(self.angle_increment > T::zero()) || !self.angle_increment.is_finite() {
            return Err(ScanError::BadIncrement);
        }
        if !(self.range_min >= T::zero()) || !(self.range_max > self.range_min) {
            return Err(ScanError::BadRangeLimits);
        }
        // an empty scan carries no span
        if self.ranges.is_empty() {
            return Ok(());
        }
        let expected = Self::expected_len(self.angle_min, self.angle_max, self.angle_increment);
        if expected != self.ranges.len() {
            return Err(ScanError::LengthMismatch {
                expected,
                actual: self.ranges.len(),
            });
        }
        Ok(())
    }

    pub fn beam_angle(&self, index: usize) -> T {
        self.angle_min + self.angle_increment * T::from_usize(index).unwrap_or_else(T::zero)
    }

    pub fn beam(&self, index: usize) -> Beam<T> {
        let r = self.ranges[index];
        if r.is_nan() || r.is_infinite() || r > self.range_max {
            Beam::NoReturn
        } else if r < self.range_min {
            Beam::Invalid
        } else {
            Beam::Hit(r)
        }
    }

    pub fn beams(&self) -> impl Iterator<Item = (T, Beam<T>)> + '_ {
        (0..self.ranges.len()).map(|i| (self.beam_angle(i), self.beam(i)))
    }
}
