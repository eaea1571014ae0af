// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

pub mod apps;
pub mod matching;
pub mod metrics;
pub mod protocol;
pub mod visibility;
