// SPDX-License-Identifier: Apache-2.0

//! Holds the `acceptance` test target; run it with
//! `cargo test -p smartcloud-acceptance --test acceptance`.
