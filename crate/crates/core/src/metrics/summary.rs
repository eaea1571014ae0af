// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;

use serde::Serialize;

use super::MetricsError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary<T> {
    pub count: usize,
    pub mean: T,
    pub p50: T,
    pub p95: T,
    pub max: T,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(pct / 100 * n)`.
pub fn nearest_rank<T: Copy>(sorted: &[T], pct: u32) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (u64::from(pct) * n).div_ceil(100).clamp(1, n);
    Some(sorted[rank as usize - 1])
}

pub fn summarize<T: Scalar>(samples: &[T]) -> Result<Summary<T>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let sum = samples.iter().fold(T::zero(), |acc, &x| acc + x);
    let n = T::from_usize(samples.len()).unwrap_or_else(T::one);
    Ok(Summary {
        count: samples.len(),
        mean: sum / n,
        p50: nearest_rank(&sorted, 50).unwrap_or_else(T::zero),
        p95: nearest_rank(&sorted, 95).unwrap_or_else(T::zero),
        max: sorted[sorted.len() - 1],
    })
}
