// SPDX-License-Identifier: Apache-2.0

//! Brute-force matching oracle and random registries.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use smartcloud_core::registry::{
    bind_roles, match_packages, validate_bindings, MatchMode, PackageDescriptor, PackageKind,
    Registry,
};

const TYPES: [&str; 3] = [
    "sensor_msgs/LaserScan",
    "tf2_msgs/TFMessage",
    "sensor_msgs/Image",
];
const ROLES: [&str; 4] = ["scan", "tf", "image", "odom"];

/// Every injective role -> topic assignment, tried exhaustively.
pub fn oracle_matches(pkg: &PackageDescriptor, available: &BTreeMap<String, String>) -> bool {
    fn go(
        roles: &[(&String, &String)],
        available: &BTreeMap<String, String>,
        used: &mut BTreeSet<String>,
        by_name: bool,
    ) -> bool {
        let Some(((role, ty), rest)) = roles.split_first() else {
            return true;
        };
        for (topic, t) in available {
            if t != *ty || used.contains(topic) {
                continue;
            }
            if by_name && *topic != format!("/{role}") {
                continue;
            }
            used.insert(topic.clone());
            if go(rest, available, used, by_name) {
                return true;
            }
            used.remove(topic);
        }
        false
    }
    if pkg.required_topics.is_empty() {
        return false;
    }
    let roles: Vec<_> = pkg.required_topics.iter().collect();
    go(
        &roles,
        available,
        &mut BTreeSet::new(),
        pkg.match_by == MatchMode::Name,
    )
}

pub fn arb_package(id: usize) -> impl Strategy<Value = PackageDescriptor> {
    (
        prop::collection::btree_map(
            prop::sample::select(ROLES.to_vec()),
            prop::sample::select(TYPES.to_vec()),
            0..4,
        ),
        any::<bool>(),
    )
        .prop_map(move |(req, by_name)| PackageDescriptor {
            id: format!("pkg{id}"),
            kind: PackageKind::RosPackage,
            required_topics: req
                .into_iter()
                .map(|(r, t)| (r.to_owned(), t.to_owned()))
                .collect(),
            outputs: vec![],
            match_by: if by_name {
                MatchMode::Name
            } else {
                MatchMode::Type
            },
            runtime: None,
        })
}

pub fn arb_registry() -> impl Strategy<Value = Registry> {
    (1usize..7)
        .prop_flat_map(|n| (0..n).map(arb_package).collect::<Vec<_>>())
        .prop_map(|pkgs| Registry::from_parts(pkgs, BTreeMap::new()).unwrap())
}

pub fn arb_topics() -> impl Strategy<Value = BTreeMap<String, String>> {
    prop::collection::btree_map(
        prop::sample::select(vec![
            "/scan",
            "/tf",
            "/image",
            "/odom",
            "/front_scan",
            "/cam",
        ]),
        prop::sample::select(TYPES.to_vec()),
        0..6,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect()
    })
}

pub fn check_against_oracle(
    reg: &Registry,
    topics: &BTreeMap<String, String>,
) -> Result<(), TestCaseError> {
    let expected: Vec<String> = reg
        .packages()
        .filter(|p| oracle_matches(p, topics))
        .map(|p| p.id.clone())
        .collect();
    prop_assert_eq!(match_packages(topics, reg), expected);
    // every suggested binding passes validation
    for pkg in reg.packages() {
        if let Some(b) = bind_roles(pkg, topics) {
            prop_assert_eq!(validate_bindings(pkg, &b, topics), Ok(()));
        }
    }
    Ok(())
}

/// A robot advertising exactly `/scan` and `/tf`.
pub fn tf_and_scan() -> BTreeMap<String, String> {
    [
        ("/scan", "sensor_msgs/LaserScan"),
        ("/tf", "tf2_msgs/TFMessage"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_owned(), b.to_owned()))
    .collect()
}
