// SPDX-License-Identifier: Apache-2.0

//! Per-process CPU utilization from `/proc/<pid>/stat` deltas, in per-core
//! percent: 100 means one core fully busy.

use std::fs;
use std::time::{Duration, Instant, SystemTime};

use serde::Serialize;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpuSample {
    pub timestamp: SystemTime,
    pub pid: u32,
    pub utilization: f64,
}

fn clock_ticks_per_sec() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let v = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if v > 0 {
        v as f64
    } else {
        100.0
    }
}

/// Online CPUs, at least 1.
pub fn core_count() -> usize {
    // SAFETY: sysconf has no preconditions.
    let v = unsafe { libc::sysconf(libc::_SC_NPROCESSORS_ONLN) };
    if v > 0 {
        v as usize
    } else {
        1
    }
}

/// utime + stime of the whole process, in clock ticks.
pub fn process_cpu_ticks(pid: u32) -> Result<u64, MetricsError> {
    let stat = fs::read_to_string(format!("/proc/{pid}/stat"))
        .map_err(|_| MetricsError::NoSuchProcess(pid))?;
    // comm may contain spaces and parentheses; fields resume after the last ')'
    let rest = stat
        .rsplit_once(')')
        .map(|(_, r)| r)
        .ok_or_else(|| MetricsError::Accounting("unterminated comm field".into()))?;
    let fields: Vec<&str> = rest.split_ascii_whitespace().collect();
    // rest starts at field 3 (state); utime is field 14, stime field 15
    let field = |n: usize| -> Result<u64, MetricsError> {
        fields
            .get(n - 3)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| MetricsError::Accounting(format!("field {n} missing")))
    };
    Ok(field(14)? + field(15)?)
}

/// Keeps the previous reading so consecutive calls give per-interval usage.
#[derive(Debug)]
pub struct CpuSampler {
    pid: u32,
    last_ticks: u64,
    last_at: Instant,
    ticks_per_sec: f64,
    cores: usize,
}

impl CpuSampler {
    pub fn new(pid: u32) -> Result<Self, MetricsError> {
        Ok(Self {
            pid,
            last_ticks: process_cpu_ticks(pid)?,
            last_at: Instant::now(),
            ticks_per_sec: clock_ticks_per_sec(),
            cores: core_count(),
        })
    }

    pub fn pid(&self) -> u32 {
        self.pid
    }

    /// Utilization since the previous call (or construction).
    pub fn sample(&mut self) -> Result<CpuSample, MetricsError> {
        let ticks = process_cpu_ticks(self.pid)?;
        let now = Instant::now();
        let wall = now.duration_since(self.last_at).as_secs_f64();
        let used = ticks.saturating_sub(self.last_ticks) as f64 / self.ticks_per_sec;
        self.last_ticks = ticks;
        self.last_at = now;
        let pct = if wall > 0.0 { 100.0 * used / wall } else { 0.0 };
        Ok(CpuSample {
            timestamp: SystemTime::now(),
            pid: self.pid,
            // tick quantization can overshoot slightly on short intervals
            utilization: pct.clamp(0.0, 100.0 * self.cores as f64),
        })
    }
}

/// Blocks for `interval` and reports the process's utilization over it.
pub fn cpu_sample(pid: u32, interval: Duration) -> Result<CpuSample, MetricsError> {
    let mut sampler = CpuSampler::new(pid)?;
    std::thread::sleep(interval);
    sampler.sample()
}
