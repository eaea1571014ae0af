// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use parking_lot::Mutex;
use serde::Serialize;

use super::{summarize, MetricsError, Summary};

/// Nanoseconds since an arbitrary per-clock epoch.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    epoch: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }
}

/// One request/response exchange. `sent_ns`/`received_ns` come from the
/// client clock, `processing_ns` from the server clock, and `injected_ns`
/// is the delay the network stand-in added on the round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencySample {
    pub sent_ns: u64,
    pub received_ns: u64,
    pub processing_ns: u64,
    pub injected_ns: u64,
}

impl LatencySample {
    pub fn rtt_ns(&self) -> u64 {
        self.received_ns - self.sent_ns
    }

    /// RTT minus the injected network delay.
    pub fn overhead_ns(&self) -> i64 {
        self.rtt_ns() as i64 - self.injected_ns as i64
    }

    /// What remains after removing network delay and server processing.
    pub fn transport_ns(&self) -> i64 {
        self.overhead_ns() - self.processing_ns as i64
    }
}

pub fn record_rtt(
    sent_ns: u64,
    received_ns: u64,
    processing_ns: u64,
    injected_ns: u64,
) -> Result<LatencySample, MetricsError> {
    if received_ns < sent_ns {
        return Err(MetricsError::ClockViolation {
            sent: sent_ns,
            received: received_ns,
        });
    }
    Ok(LatencySample {
        sent_ns,
        received_ns,
        processing_ns,
        injected_ns,
    })
}

/// Append-only sample store, safe to share between threads.
#[derive(Debug, Default)]
pub struct LatencySink {
    samples: Mutex<Vec<LatencySample>>,
}

fn ms(ns: f64) -> f64 {
    ns / 1e6
}

impl LatencySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &self,
        sent_ns: u64,
        received_ns: u64,
        processing_ns: u64,
        injected_ns: u64,
    ) -> Result<LatencySample, MetricsError> {
        let s = record_rtt(sent_ns, received_ns, processing_ns, injected_ns)?;
        self.samples.lock().push(s);
        Ok(s)
    }

    pub fn push(&self, sample: LatencySample) {
        self.samples.lock().push(sample);
    }

    pub fn snapshot(&self) -> Vec<LatencySample> {
        self.samples.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.samples.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// RTT summary in milliseconds.
    pub fn rtt_summary_ms(&self) -> Result<Summary<f64>, MetricsError> {
        let xs: Vec<f64> = self
            .snapshot()
            .iter()
            .map(|s| ms(s.rtt_ns() as f64))
            .collect();
        summarize(&xs)
    }

    /// Server processing summary in milliseconds.
    pub fn processing_summary_ms(&self) -> Result<Summary<f64>, MetricsError> {
        let xs: Vec<f64> = self
            .snapshot()
            .iter()
            .map(|s| ms(s.processing_ns as f64))
            .collect();
        summarize(&xs)
    }

    pub fn overhead_summary_ms(&self) -> Result<Summary<f64>, MetricsError> {
        let xs: Vec<f64> = self
            .snapshot()
            .iter()
            .map(|s| ms(s.overhead_ns() as f64))
            .collect();
        summarize(&xs)
    }
}
