// SPDX-License-Identifier: Apache-2.0

//! One thread per app instance.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use smartcloud_core::apps::OffloadApp;

use crate::gateway::{Gateway, Instance};
use crate::GatewayError;

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "app panicked".to_owned())
}

pub(crate) fn run(gw: Gateway, inst: Arc<Instance>, mut app: Box<dyn OffloadApp>) {
    while let Some(job) = inst.inbox.pop() {
        let outcome = catch_unwind(AssertUnwindSafe(|| app.on_input(job.input)));
        match outcome {
            Ok(Ok(outputs)) => {
                let mut receipt = None;
                for out in outputs {
                    if let Some(r) = gw.publish_result(&inst, &out.channel, out.value) {
                        receipt = Some(r);
                    }
                }
                *inst.counters.lock() = app.counters();
                if let Some(reply) = job.reply {
                    let _ = reply.send(receipt.ok_or(GatewayError::FrameDropped));
                }
            }
            Ok(Err(e)) => {
                inst.errors.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(instance = %inst.id, error = %e, "input rejected by app");
                if let Some(reply) = job.reply {
                    let _ = reply.send(Err(GatewayError::App(e.to_string())));
                }
            }
            Err(payload) => {
                let reason = panic_text(payload.as_ref());
                if let Some(reply) = job.reply {
                    let _ = reply.send(Err(GatewayError::App(reason.clone())));
                }
                gw.fail_instance(&inst, &reason);
                return;
            }
        }
    }
    match catch_unwind(AssertUnwindSafe(|| app.finalize())) {
        Ok(finals) => {
            for out in finals {
                gw.store_final(&inst, &out.channel, out.value);
            }
            *inst.counters.lock() = app.counters();
        }
        Err(payload) => {
            tracing::error!(instance = %inst.id, reason = %panic_text(payload.as_ref()), "finalize panicked");
        }
    }
}
