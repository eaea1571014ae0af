// SPDX-License-Identifier: Apache-2.0

//! Bounded per-instance work queue.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{Condvar, Mutex};
use smartcloud_core::apps::AppInput;
use tokio::sync::oneshot;

use crate::gateway::FrameReceipt;
use crate::GatewayError;

pub(crate) type Reply = oneshot::Sender<Result<FrameReceipt, GatewayError>>;

pub(crate) struct Job {
    pub input: AppInput,
    /// Set for web-service frames whose caller waits for the message id.
    pub reply: Option<Reply>,
}

impl Job {
    fn is_scan(&self) -> bool {
        matches!(&self.input, AppInput::Topic { role, .. } if role == "scan")
    }
}

struct State {
    queue: VecDeque<Job>,
    closed: bool,
}

pub(crate) struct Inbox {
    state: Mutex<State>,
    ready: Condvar,
    cap: usize,
    dropped: AtomicU64,
}

impl Inbox {
    pub fn new(cap: usize) -> Self {
        Self {
            state: Mutex::new(State {
                queue: VecDeque::new(),
                closed: false,
            }),
            ready: Condvar::new(),
            cap: cap.max(1),
            dropped: AtomicU64::new(0),
        }
    }

    /// Enqueues `job`. When full, the oldest scan is evicted, or the oldest
    /// job of any kind if no scan is queued. Returns false once closed.
    pub fn push(&self, job: Job) -> bool {
        let mut st = self.state.lock();
        if st.closed {
            return false;
        }
        if st.queue.len() >= self.cap {
            let victim = st.queue.iter().position(Job::is_scan).unwrap_or(0);
            // dropping a job also drops its reply sender, which the waiter sees
            st.queue.remove(victim);
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        st.queue.push_back(job);
        drop(st);
        self.ready.notify_one();
        true
    }

    /// Blocks for the next job; `None` once closed and drained.
    pub fn pop(&self) -> Option<Job> {
        let mut st = self.state.lock();
        loop {
            if let Some(job) = st.queue.pop_front() {
                return Some(job);
            }
            if st.closed {
                return None;
            }
            self.ready.wait(&mut st);
        }
    }

    pub fn close(&self) {
        self.state.lock().closed = true;
        self.ready.notify_all();
    }

    /// Closes and discards everything still queued.
    pub fn abandon(&self) {
        let mut st = self.state.lock();
        st.closed = true;
        st.queue.clear();
        drop(st);
        self.ready.notify_all();
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.state.lock().queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn topic(role: &str, n: u64) -> Job {
        Job {
            input: AppInput::Topic {
                role: role.into(),
                payload: json!(n),
            },
            reply: None,
        }
    }

    fn payload(job: &Job) -> (String, u64) {
        match &job.input {
            AppInput::Topic { role, payload } => (role.clone(), payload.as_u64().unwrap()),
            AppInput::Frame { .. } => unreachable!(),
        }
    }

    #[test]
    fn overflow_evicts_oldest_scan_first() {
        let inbox = Inbox::new(3);
        inbox.push(topic("tf", 0));
        inbox.push(topic("scan", 1));
        inbox.push(topic("scan", 2));
        inbox.push(topic("tf", 3));
        assert_eq!(inbox.dropped(), 1);
        inbox.close();
        let got: Vec<_> = std::iter::from_fn(|| inbox.pop())
            .map(|j| payload(&j))
            .collect();
        assert_eq!(
            got,
            [("tf".into(), 0), ("scan".into(), 2), ("tf".into(), 3)]
        );
    }

    #[test]
    fn closed_inbox_refuses_work() {
        let inbox = Inbox::new(2);
        inbox.close();
        assert!(!inbox.push(topic("scan", 0)));
        assert!(inbox.pop().is_none());
    }
}
