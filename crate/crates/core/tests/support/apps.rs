// SPDX-License-Identifier: Apache-2.0

//! Mapper and classifier oracles.

use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use smartcloud_core::apps::classifier::{
    classify_image, ClassifierConfig, Detection, FixtureManifest, DEFAULT_LABELS,
};
use smartcloud_core::apps::grid::{
    map_entropy, occupancy_update, CellState, LogOddsParams, OccupancyGrid,
};
use smartcloud_core::apps::image::{decode_jpeg, Image};
use smartcloud_core::geometry::{LaserScan2D, Pose2D};
use smartcloud_core::Grid;

pub fn grid(w: usize, h: usize) -> Grid {
    OccupancyGrid::new(w, h, 0.1, Pose2D::default(), LogOddsParams::default()).unwrap()
}

pub fn arb_pose() -> impl Strategy<Value = Pose2D<f64>> {
    (0.5f64..1.5, 0.5f64..1.5, -3.2f64..3.2).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
}

/// Ranges are either short hits that stay inside a 2 m grid or no-returns.
pub fn arb_scan() -> impl Strategy<Value = LaserScan2D<f64>> {
    (
        -3.1f64..0.0,
        0.05f64..0.5,
        prop::collection::vec(prop_oneof![4 => 0.05f64..0.45, 1 => Just(f64::NAN)], 1..24),
    )
        .prop_map(|(a0, inc, ranges)| LaserScan2D::from_start(a0, inc, 0.05, 0.45, ranges).unwrap())
}

pub fn entropy_oracle(cells: &[f64]) -> f64 {
    cells
        .iter()
        .map(|&l| {
            let p = l.exp() / (1.0 + l.exp());
            let mut h = 0.0;
            for x in [p, 1.0 - p] {
                if x > 0.0 {
                    h -= x * x.ln();
                }
            }
            h / std::f64::consts::LN_2
        })
        .sum()
}

pub fn check_clamped(updates: &[(Pose2D<f64>, LaserScan2D<f64>)]) -> Result<(), TestCaseError> {
    let mut g = grid(20, 20);
    for (pose, scan) in updates {
        occupancy_update(&mut g, pose, scan).unwrap();
    }
    prop_assert!(g.cells().iter().all(|&l| (-4.0..=4.0).contains(&l)));
    let h = map_entropy(&g);
    prop_assert!((0.0..=400.0).contains(&h));
    Ok(())
}

pub fn check_hit_reduces_entropy(
    pose: &Pose2D<f64>,
    scan: &LaserScan2D<f64>,
) -> Result<(), TestCaseError> {
    let mut g = grid(20, 20);
    let before = g.entropy();
    prop_assert_eq!(before, 400.0);
    g.update(pose, scan).unwrap();
    if scan.ranges.iter().any(|r| r.is_finite()) {
        prop_assert!(g.entropy() < before);
    }
    Ok(())
}

pub fn check_saturation(pose: &Pose2D<f64>, scan: &LaserScan2D<f64>) -> Result<(), TestCaseError> {
    let mut g = grid(20, 20);
    for _ in 0..40 {
        g.update(pose, scan).unwrap();
    }
    let states: Vec<CellState> = (0..400).map(|k| g.state(k % 20, k / 20)).collect();
    let saturated: Vec<usize> = (0..400).filter(|&k| g.cells()[k].abs() >= 3.5).collect();
    g.update(pose, scan).unwrap();
    for k in saturated {
        prop_assert!(g.cells()[k].abs() >= 3.5);
        prop_assert_eq!(g.state(k % 20, k / 20), states[k]);
    }
    Ok(())
}

pub fn check_entropy_oracle(cells: &[f64]) -> Result<(), TestCaseError> {
    let mut g = grid(4, 4);
    for (k, &l) in cells.iter().enumerate() {
        g.set_log_odds(k % 4, k / 4, l);
    }
    let expected = entropy_oracle(cells);
    prop_assert!(((g.entropy() - expected) / expected).abs() <= 1e-12);
    Ok(())
}

pub fn heuristic_oracle(image: &Image, labels: &[&str]) -> Vec<Detection> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let data = image.data();
    let mut means = Vec::new();
    for b in 0..3 {
        let (x0, x1) = (b * w / 3, (b + 1) * w / 3);
        let mut total = 0.0;
        let mut count = 0.0;
        for row in data.chunks(w * 3).take(h) {
            for px in row[x0 * 3..x1 * 3].chunks(3) {
                total += (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0;
                count += 1.0;
            }
        }
        means.push(if count > 0.0 { total / count } else { 0.0 });
    }
    let sum: f64 = means.iter().sum();
    means
        .iter()
        .map(|&m| {
            let idx = ((m / 256.0 * labels.len() as f64) as usize).min(labels.len() - 1);
            let p = if sum > 0.0 { m / sum } else { 1.0 / 3.0 };
            Detection::new(labels[idx], (p * 100.0).round() / 100.0)
        })
        .collect()
}

pub fn arb_image() -> impl Strategy<Value = Image> {
    (3u32..24, 1u32..16).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize)
            .prop_map(move |data| Image::new(w, h, data).unwrap())
    })
}

pub fn check_heuristic(image: &Image) -> Result<(), TestCaseError> {
    let cfg = ClassifierConfig::heuristic_only();
    let got = classify_image(image, &cfg).unwrap();
    let want = heuristic_oracle(image, &DEFAULT_LABELS);
    prop_assert_eq!(got.len(), 3);
    for (g, w) in got.iter().zip(&want) {
        prop_assert_eq!(&g.label, &w.label);
        prop_assert!((g.probability - w.probability).abs() < 1e-9);
    }
    prop_assert_eq!(classify_image(image, &cfg).unwrap(), got);
    Ok(())
}

/// Every shipped fixture decodes to its recorded digest and classifies to
/// its recorded results, twice over.
pub fn check_fixtures(dir: &Path) -> Result<(), String> {
    let manifest = FixtureManifest::shipped();
    if manifest.fixtures.len() < 5 {
        return Err(format!("only {} fixtures", manifest.fixtures.len()));
    }
    let cfg = ClassifierConfig::shipped();
    for entry in &manifest.fixtures {
        let bytes =
            std::fs::read(dir.join(&entry.name)).map_err(|e| format!("{}: {e}", entry.name))?;
        let image = decode_jpeg(&bytes).map_err(|e| format!("{}: {e}", entry.name))?;
        if image.digest() != entry.digest {
            return Err(format!("{} digest drifted", entry.name));
        }
        let first = classify_image(&image, &cfg).map_err(|e| e.to_string())?;
        if first != entry.results
            || classify_image(&image, &cfg).map_err(|e| e.to_string())? != first
        {
            return Err(format!("{} classified inconsistently", entry.name));
        }
    }
    Ok(())
}
