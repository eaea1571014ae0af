// SPDX-License-Identifier: Apache-2.0

//! Offloadable applications: the occupancy mapper and the image classifier,
//! plus the payload decoding they need.

pub mod classifier;
pub mod grid;
pub mod image;
pub mod ros_json;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::Pose2D;
use crate::registry::Runtime;
use classifier::{classify_image, ClassifierConfig, Detection};
use grid::{LogOddsParams, MapSnapshot, OccupancyGrid};
use image::Image;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("app initialization failed: {0}")]
    Init(String),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
}

/// One unit of work for an app instance.
#[derive(Debug, Clone)]
pub enum AppInput {
    /// A frame on one of the instance's bound topics.
    Topic { role: String, payload: Value },
    /// A decoded frame uploaded through the web service.
    Frame { image: Image, reference_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppOutput {
    pub channel: String,
    pub value: Value,
}

impl AppOutput {
    pub fn new(channel: &str, value: Value) -> Self {
        Self {
            channel: channel.to_owned(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AppCounters {
    pub processed: u64,
    /// Inputs skipped because a prerequisite was missing.
    pub skipped: u64,
}

pub trait OffloadApp: Send {
    fn on_input(&mut self, input: AppInput) -> Result<Vec<AppOutput>, AppError>;

    /// Last outputs when the instance is stopped.
    fn finalize(&mut self) -> Vec<AppOutput>;

    fn counters(&self) -> AppCounters;
}

/// Topic-frame entry point.
pub fn app_on_message(
    app: &mut dyn OffloadApp,
    role: &str,
    payload: &Value,
) -> Result<Vec<AppOutput>, AppError> {
    app.on_input(AppInput::Topic {
        role: role.to_owned(),
        payload: payload.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 3],
    /// Emit the full map every this many scans.
    pub map_every: u64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            width: 100,
            height: 100,
            resolution: 0.1,
            origin: [0.0, 0.0, 0.0],
            map_every: 10,
        }
    }
}

/// Pose-known occupancy mapper: `tf` updates the pose, `scan` integrates.
pub struct MapperApp {
    grid: OccupancyGrid<f64>,
    pose: Option<Pose2D<f64>>,
    scans: u64,
    map_every: u64,
    counters: AppCounters,
}

impl MapperApp {
    pub fn new(config: &MapperConfig) -> Result<Self, AppError> {
        let [ox, oy, ot] = config.origin;
        let grid = OccupancyGrid::new(
            config.width,
            config.height,
            config.resolution,
            Pose2D::new(ox, oy, ot),
            LogOddsParams::default(),
        )
        .map_err(|e| AppError::Init(e.to_string()))?;
        Ok(Self {
            grid,
            pose: None,
            scans: 0,
            map_every: config.map_every.max(1),
            counters: AppCounters::default(),
        })
    }

    pub fn grid(&self) -> &OccupancyGrid<f64> {
        &self.grid
    }

    fn map_output(&self) -> AppOutput {
        AppOutput::new("map", MapSnapshot::from_grid(&self.grid).to_json())
    }

    fn entropy_output(&self) -> AppOutput {
        AppOutput::new("entropy", json!(self.grid.entropy()))
    }
}

impl OffloadApp for MapperApp {
    fn on_input(&mut self, input: AppInput) -> Result<Vec<AppOutput>, AppError> {
        let AppInput::Topic { role, payload } = input else {
            return Err(AppError::TypeMismatch(
                "mapper takes topic frames only".into(),
            ));
        };
        match role.as_str() {
            "tf" => {
                let pose = ros_json::pose_from_tf(&payload)
                    .map_err(|e| AppError::TypeMismatch(e.to_string()))?;
                self.pose = Some(pose);
                self.counters.processed += 1;
                Ok(Vec::new())
            }
            "scan" => {
                let scan = ros_json::scan_from_json(&payload)
                    .map_err(|e| AppError::TypeMismatch(e.to_string()))?;
                let Some(pose) = self.pose else {
                    self.counters.skipped += 1;
                    return Ok(Vec::new());
                };
                self.grid.update(&pose, &scan)?;
                self.scans += 1;
                self.counters.processed += 1;
                let mut out = vec![self.entropy_output()];
                if self.scans.is_multiple_of(self.map_every) {
                    out.push(self.map_output());
                }
                Ok(out)
            }
            other => Err(AppError::TypeMismatch(format!(
                "mapper has no role {other:?}"
            ))),
        }
    }

    fn finalize(&mut self) -> Vec<AppOutput> {
        vec![self.map_output(), self.entropy_output()]
    }

    fn counters(&self) -> AppCounters {
        self.counters
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub message_id: u64,
    pub reference_id: String,
    pub results: Vec<Detection>,
}

impl DetectionReport {
    pub fn empty(message_id: u64) -> Self {
        Self {
            message_id,
            reference_id: String::new(),
            results: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        serde_json::from_value(v.clone()).ok()
    }
}

/// Classifies image frames, numbering reports from 1.
pub struct DetectorApp {
    config: ClassifierConfig,
    next_id: u64,
    last: Option<DetectionReport>,
    counters: AppCounters,
}

impl DetectorApp {
    pub fn new(config: ClassifierConfig) -> Self {
        Self {
            config,
            next_id: 1,
            last: None,
            counters: AppCounters::default(),
        }
    }

    fn report(&mut self, image: &Image, reference_id: String) -> Result<Vec<AppOutput>, AppError> {
        let results = classify_image(image, &self.config)?;
        let report = DetectionReport {
            message_id: self.next_id,
            reference_id,
            results,
        };
        self.next_id += 1;
        self.counters.processed += 1;
        let out = AppOutput::new("detections", report.to_json());
        self.last = Some(report);
        Ok(vec![out])
    }
}

impl OffloadApp for DetectorApp {
    fn on_input(&mut self, input: AppInput) -> Result<Vec<AppOutput>, AppError> {
        match input {
            AppInput::Frame {
                image,
                reference_id,
            } => self.report(&image, reference_id),
            AppInput::Topic { role, payload } if role == "image" => {
                let data = payload
                    .get("data")
                    .and_then(Value::as_str)
                    .ok_or_else(|| AppError::TypeMismatch("image payload needs data".into()))?;
                let image = image::decode_base64_image(data)
                    .map_err(|e| AppError::TypeMismatch(e.to_string()))?;
                let reference_id = payload
                    .get("reference_id")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_owned();
                self.report(&image, reference_id)
            }
            AppInput::Topic { role, .. } => Err(AppError::TypeMismatch(format!(
                "detector has no role {role:?}"
            ))),
        }
    }

    fn finalize(&mut self) -> Vec<AppOutput> {
        self.last
            .as_ref()
            .map(|r| vec![AppOutput::new("detections", r.to_json())])
            .unwrap_or_default()
    }

    fn counters(&self) -> AppCounters {
        self.counters
    }
}

/// Everything an app factory might need.
#[derive(Debug, Clone)]
pub struct AppContext {
    pub classifier: ClassifierConfig,
}

impl Default for AppContext {
    fn default() -> Self {
        Self {
            classifier: ClassifierConfig::shipped(),
        }
    }
}

pub fn instantiate(
    runtime: Runtime,
    params: Option<&Value>,
    ctx: &AppContext,
) -> Result<Box<dyn OffloadApp>, AppError> {
    match runtime {
        Runtime::OccupancyMapper => {
            let config = match params {
                Some(p) => serde_json::from_value(p.clone())
                    .map_err(|e| AppError::Init(format!("mapper params: {e}")))?,
                None => MapperConfig::default(),
            };
            Ok(Box::new(MapperApp::new(&config)?))
        }
        Runtime::ImageClassifier => Ok(Box::new(DetectorApp::new(ctx.classifier.clone()))),
    }
}
