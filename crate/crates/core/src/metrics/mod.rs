// SPDX-License-Identifier: Apache-2.0

//! Latency and CPU measurement.

mod cpu;
mod latency;
mod summary;

pub use cpu::{core_count, cpu_sample, process_cpu_ticks, CpuSample, CpuSampler};
pub use latency::{record_rtt, LatencySample, LatencySink, MonotonicClock};
pub use summary::{nearest_rank, summarize, Summary};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("received timestamp {received} precedes sent timestamp {sent}")]
    ClockViolation { sent: u64, received: u64 },
    #[error("no samples")]
    EmptyInput,
    #[error("no such process {0}")]
    NoSuchProcess(u32),
    #[error("cannot read process accounting: {0}")]
    Accounting(String),
}
