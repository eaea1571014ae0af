// SPDX-License-Identifier: Apache-2.0

//! Samples child processes whose load is known: a sleeper, and this test
//! binary re-run as one or two busy-looping threads.

use std::process::{Child, Command};
use std::time::{Duration, Instant};

use smartcloud_core::metrics::{core_count, cpu_sample, MetricsError};

const BUSY_ENV: &str = "SMARTCLOUD_BUSY_THREADS";

/// Not a test of its own: the body of the busy child.
#[test]
#[ignore]
fn busy_child() {
    let Ok(threads) = std::env::var(BUSY_ENV) else {
        return;
    };
    let threads: usize = threads.parse().unwrap();
    let until = Instant::now() + Duration::from_secs(4);
    let workers: Vec<_> = (0..threads)
        .map(|_| {
            std::thread::spawn(move || {
                let mut x = 0u64;
                while Instant::now() < until {
                    x = std::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(1));
                }
                x
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
}

fn spawn_busy(threads: usize) -> Child {
    Command::new(std::env::current_exe().unwrap())
        .args([
            "busy_child",
            "--exact",
            "--ignored",
            "--nocapture",
            "--test-threads=1",
        ])
        .env(BUSY_ENV, threads.to_string())
        .spawn()
        .unwrap()
}

/// Load one busy child, after letting it get going.
fn busy_utilization(threads: usize) -> f64 {
    let mut child = spawn_busy(threads);
    std::thread::sleep(Duration::from_millis(500));
    let sample = cpu_sample(child.id(), Duration::from_secs(1)).unwrap();
    child.kill().ok();
    child.wait().unwrap();
    sample.utilization
}

// The busy cases share one test so that they never overlap each other.
#[test]
fn known_loads_read_as_expected() {
    let mut sleeper = Command::new("sleep").arg("5").spawn().unwrap();
    let idle = cpu_sample(sleeper.id(), Duration::from_secs(1)).unwrap();
    sleeper.kill().ok();
    sleeper.wait().unwrap();
    assert!(
        idle.utilization < 2.0,
        "sleeping process at {:.1}%",
        idle.utilization
    );

    let one = busy_utilization(1);
    assert!((one - 100.0).abs() <= 10.0, "one busy thread at {one:.1}%");

    if core_count() < 2 {
        eprintln!("skipping the two-thread case: {} core online", core_count());
        return;
    }
    let two = busy_utilization(2);
    assert!((two - 200.0).abs() <= 15.0, "two busy threads at {two:.1}%");
    assert!(two <= 100.0 * core_count() as f64);
}

#[test]
fn vanished_process_is_reported() {
    let mut child = Command::new("true").spawn().unwrap();
    let pid = child.id();
    child.wait().unwrap();
    assert_eq!(
        cpu_sample(pid, Duration::from_millis(10)),
        Err(MetricsError::NoSuchProcess(pid))
    );
}
