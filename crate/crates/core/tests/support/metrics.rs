// SPDX-License-Identifier: Apache-2.0

//! Percentile definition oracle.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use smartcloud_core::metrics::{nearest_rank, summarize};

/// Smallest sample v such that at least pct% of samples are <= v.
pub fn percentile_by_definition(xs: &[f64], pct: u32) -> f64 {
    let n = xs.len() as f64;
    let mut candidates = xs.to_vec();
    candidates.sort_by(f64::total_cmp);
    *candidates
        .iter()
        .find(|&&v| {
            let at_or_below = xs.iter().filter(|&&x| x <= v).count() as f64;
            100.0 * at_or_below >= f64::from(pct) * n
        })
        .unwrap()
}

pub fn check_summary(xs: &[f64]) -> Result<(), TestCaseError> {
    let s = summarize(xs).unwrap();
    prop_assert_eq!(s.count, xs.len());
    prop_assert_eq!(s.p50, percentile_by_definition(xs, 50));
    prop_assert_eq!(s.p95, percentile_by_definition(xs, 95));
    prop_assert_eq!(s.max, xs.iter().cloned().fold(f64::MIN, f64::max));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    prop_assert!((s.mean - mean).abs() <= 1e-9 * mean.max(1.0));
    prop_assert!(s.p50 <= s.p95 && s.p95 <= s.max);
    Ok(())
}

pub fn check_nearest_rank(xs: &[f64], pct: u32) -> Result<(), TestCaseError> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    prop_assert_eq!(
        nearest_rank(&sorted, pct).unwrap(),
        percentile_by_definition(xs, pct)
    );
    Ok(())
}
