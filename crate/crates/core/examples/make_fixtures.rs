// SPDX-License-Identifier: Apache-2.0

//! Regenerates the fixture frames and their manifest.
//!
//!     cargo run -p smartcloud-core --example make_fixtures

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartcloud_core::apps::classifier::{Detection, FixtureEntry, FixtureManifest, FIXTURE_SCHEMA};
use smartcloud_core::apps::image::{decode_jpeg, Image};

const W: u32 = 96;
const H: u32 = 72;

/// Textured scene: a base colour, a few coloured boxes, per-pixel noise.
fn scene(seed: u64, base: [u8; 3], boxes: &[([u32; 4], [u8; 3])]) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity((W * H * 3) as usize);
    for y in 0..H {
        for x in 0..W {
            let mut c = base;
            for &([x0, y0, x1, y1], col) in boxes {
                if x >= x0 && x < x1 && y >= y0 && y < y1 {
                    c = col;
                }
            }
            for ch in c {
                let n: i16 = rng.gen_range(-12..=12);
                data.push((i16::from(ch) + n).clamp(0, 255) as u8);
            }
        }
    }
    Image::new(W, H, data).expect("sized buffer")
}

fn d(label: &str, p: f64) -> Detection {
    Detection::new(label, p)
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).expect("fixture dir");
    let frames: Vec<(&str, Image, Vec<Detection>)> = vec![
        (
            "office",
            scene(
                1,
                [180, 170, 150],
                &[
                    ([6, 30, 26, 66], [60, 60, 70]),
                    ([38, 20, 60, 62], [30, 30, 35]),
                    ([70, 10, 90, 66], [120, 120, 125]),
                ],
            ),
            vec![
                d("Trash Can", 0.66),
                d("Swivel Chair", 0.72),
                d("File Cabinet", 0.44),
            ],
        ),
        (
            "corridor_1",
            scene(2, [200, 200, 190], &[([40, 8, 56, 70], [90, 70, 50])]),
            vec![d("Doorway", 0.81)],
        ),
        (
            "corridor_2",
            scene(3, [190, 195, 200], &[([10, 12, 50, 40], [235, 235, 235])]),
            vec![d("Whiteboard", 0.77), d("Doorway", 0.31)],
        ),
        (
            "corridor_3",
            scene(4, [170, 180, 185], &[([60, 5, 92, 40], [140, 190, 230])]),
            vec![d("Window", 0.69)],
        ),
        (
            "storage",
            scene(
                5,
                [150, 140, 130],
                &[
                    ([8, 10, 40, 70], [110, 110, 115]),
                    ([60, 44, 76, 70], [50, 55, 60]),
                ],
            ),
            vec![d("File Cabinet", 0.58), d("Trash Can", 0.41)],
        ),
    ];
    let mut fixtures = Vec::new();
    for (name, image, results) in frames {
        let jpeg = image.to_jpeg(90);
        let file = format!("{name}.jpg");
        fs::write(dir.join(&file), &jpeg).expect("write frame");
        // the digest covers the pixels as a decoder sees them
        let decoded = decode_jpeg(&jpeg).expect("round trip");
        fixtures.push(FixtureEntry {
            name: file,
            digest: decoded.digest(),
            results,
        });
    }
    let manifest = FixtureManifest {
        schema: FIXTURE_SCHEMA.to_owned(),
        fixtures,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text + "\n").expect("write manifest");
    println!(
        "wrote {} fixtures to {}",
        manifest.fixtures.len(),
        dir.display()
    );
}
