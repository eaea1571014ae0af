// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use smartcloud_core::metrics::{record_rtt, summarize, MetricsError};

mod support;

use support::metrics::{check_nearest_rank, check_summary};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn percentiles_match_definition(xs in prop::collection::vec(0.0f64..500.0, 1..200)) {
        check_summary(&xs)?;
    }

    #[test]
    fn any_percentile(xs in prop::collection::vec(-1e3f64..1e3, 1..64), pct in 1u32..=100) {
        check_nearest_rank(&xs, pct)?;
    }

    #[test]
    fn f32_summaries(xs in prop::collection::vec(0.0f32..100.0, 1..50)) {
        let s = summarize(&xs).unwrap();
        prop_assert!(s.p50 <= s.max);
    }

    #[test]
    fn rtt_ordering(sent in 0u64..1 << 40, delta in 0u64..1 << 30) {
        prop_assert_eq!(record_rtt(sent, sent + delta, 0, 0).unwrap().rtt_ns(), delta);
        if delta > 0 {
            prop_assert!(
                matches!(record_rtt(sent + delta, sent, 0, 0), Err(MetricsError::ClockViolation { .. })),
                "expected a clock violation"
            );
        }
    }
}
