// SPDX-License-Identifier: Apache-2.0

//! JSON shapes of the ROS messages that cross the bridge.

use serde_json::{json, Value};

use crate::geometry::{LaserScan2D, Pose2D};

pub const TF_TYPE: &str = "tf2_msgs/TFMessage";
pub const SCAN_TYPE: &str = "sensor_msgs/LaserScan";
pub const COMPRESSED_IMAGE_TYPE: &str = "sensor_msgs/CompressedImage";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("payload is not a valid {expected}: {detail}")]
pub struct PayloadError {
    pub expected: &'static str,
    pub detail: String,
}

fn err(expected: &'static str, detail: impl Into<String>) -> PayloadError {
    PayloadError {
        expected,
        detail: detail.into(),
    }
}

fn num(v: &Value, key: &str, expected: &'static str) -> Result<f64, PayloadError> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| err(expected, format!("missing number {key:?}")))
}

/// A single `map -> base_link` transform.
pub fn tf_message(pose: &Pose2D<f64>, seq: u64) -> Value {
    let half = pose.theta / 2.0;
    json!({
        "transforms": [{
            "header": { "seq": seq, "frame_id": "map" },
            "child_frame_id": "base_link",
            "transform": {
                "translation": { "x": pose.x, "y": pose.y, "z": 0.0 },
                "rotation": { "x": 0.0, "y": 0.0, "z": half.sin(), "w": half.cos() }
            }
        }]
    })
}

/// Planar pose of the `base_link` transform, or the first transform if none
/// is named so.
pub fn pose_from_tf(msg: &Value) -> Result<Pose2D<f64>, PayloadError> {
    let transforms = msg
        .get("transforms")
        .and_then(Value::as_array)
        .ok_or_else(|| err(TF_TYPE, "missing transforms array"))?;
    let chosen = transforms
        .iter()
        .find(|t| t.get("child_frame_id").and_then(Value::as_str) == Some("base_link"))
        .or_else(|| transforms.first())
        .ok_or_else(|| err(TF_TYPE, "empty transforms array"))?;
    let tr = chosen
        .get("transform")
        .ok_or_else(|| err(TF_TYPE, "missing transform"))?;
    let t = tr
        .get("translation")
        .ok_or_else(|| err(TF_TYPE, "missing translation"))?;
    let r = tr
        .get("rotation")
        .ok_or_else(|| err(TF_TYPE, "missing rotation"))?;
    let (qx, qy, qz, qw) = (
        num(r, "x", TF_TYPE)?,
        num(r, "y", TF_TYPE)?,
        num(r, "z", TF_TYPE)?,
        num(r, "w", TF_TYPE)?,
    );
    let yaw = (2.0 * (qw * qz + qx * qy)).atan2(1.0 - 2.0 * (qy * qy + qz * qz));
    Ok(Pose2D::new(
        num(t, "x", TF_TYPE)?,
        num(t, "y", TF_TYPE)?,
        yaw,
    ))
}

/// NaN and infinite ranges travel as `null`.
pub fn scan_message(scan: &LaserScan2D<f64>, seq: u64) -> Value {
    let ranges: Vec<Value> = scan
        .ranges
        .iter()
        .map(|&r| if r.is_finite() { json!(r) } else { Value::Null })
        .collect();
    json!({
        "header": { "seq": seq, "frame_id": "base_link" },
        "angle_min": scan.angle_min,
        "angle_max": scan.angle_max,
        "angle_increment": scan.angle_increment,
        "range_min": scan.range_min,
        "range_max": scan.range_max,
        "ranges": ranges,
    })
}

pub fn scan_from_json(msg: &Value) -> Result<LaserScan2D<f64>, PayloadError> {
    let ranges = msg
        .get("ranges")
        .and_then(Value::as_array)
        .ok_or_else(|| err(SCAN_TYPE, "missing ranges array"))?
        .iter()
        .map(|v| match v {
            Value::Null => Ok(f64::NAN),
            other => other
                .as_f64()
                .ok_or_else(|| err(SCAN_TYPE, "non-numeric range")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    LaserScan2D::new(
        num(msg, "angle_min", SCAN_TYPE)?,
        num(msg, "angle_max", SCAN_TYPE)?,
        num(msg, "angle_increment", SCAN_TYPE)?,
        num(msg, "range_min", SCAN_TYPE)?,
        num(msg, "range_max", SCAN_TYPE)?,
        ranges,
    )
    .map_err(|e| err(SCAN_TYPE, e.to_string()))
}

/// `sensor_msgs/CompressedImage` carrying base64 JPEG data.
pub fn compressed_image_message(jpeg_base64: &str, reference_id: &str) -> Value {
    json!({ "format": "jpeg", "data": jpeg_base64, "reference_id": reference_id })
}
