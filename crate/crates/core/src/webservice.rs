// SPDX-License-Identifier: Apache-2.0

//! Non-ROS result path: XML rendering of detection reports and the
//! per-stream latest-result store that robots poll.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::SystemTime;

use parking_lot::{Mutex, RwLock};
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::apps::classifier::Detection;
use crate::apps::image::{decode_base64_image, decode_jpeg, Image, ImageError};
use crate::apps::DetectionReport;

pub const XML_CONTENT_TYPE: &str = "application/xml";

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders `Response > Message > {MessageID, ReferenceID, Result*}` with
/// two-space indentation and two-decimal probabilities.
pub fn render_detection_xml(report: &DetectionReport) -> String {
    let mut out = String::with_capacity(160 + 96 * report.results.len());
    out.push_str("<?xml version=\"1.0\"?>\n");
    out.push_str("<Response>\n");
    out.push_str("  <Message>\n");
    let _ = writeln!(out, "    <MessageID>{}</MessageID>", report.message_id);
    let _ = writeln!(
        out,
        "    <ReferenceID>{}</ReferenceID>",
        escape(&report.reference_id)
    );
    for r in &report.results {
        out.push_str("    <Result>\n");
        let _ = writeln!(out, "      <Class>{}</Class>", escape(&r.label));
        let _ = writeln!(out, "      <Probability>{:.2}</Probability>", r.probability);
        out.push_str("    </Result>\n");
    }
    out.push_str("  </Message>\n");
    out.push_str("</Response>\n");
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown stream {0:?}")]
    UnknownStream(String),
}

#[derive(Debug, Clone)]
struct StreamEntry {
    latest: DetectionReport,
    counter: u64,
    updated_at: Option<SystemTime>,
}

/// Latest report per stream. Message ids are assigned here so they stay
/// monotone for the whole life of a stream.
#[derive(Debug, Default)]
pub struct ResultStore {
    streams: RwLock<BTreeMap<String, Arc<Mutex<StreamEntry>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSnapshot {
    pub report: DetectionReport,
    pub updated_at: Option<SystemTime>,
}

impl ResultStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates the stream if it does not exist yet.
    pub fn open(&self, stream: &str) {
        self.streams
            .write()
            .entry(stream.to_owned())
            .or_insert_with(|| {
                Arc::new(Mutex::new(StreamEntry {
                    latest: DetectionReport::empty(0),
                    counter: 0,
                    updated_at: None,
                }))
            });
    }

    pub fn close(&self, stream: &str) -> bool {
        self.streams.write().remove(stream).is_some()
    }

    pub fn contains(&self, stream: &str) -> bool {
        self.streams.read().contains_key(stream)
    }

    pub fn stream_ids(&self) -> Vec<String> {
        self.streams.read().keys().cloned().collect()
    }

    fn entry(&self, stream: &str) -> Result<Arc<Mutex<StreamEntry>>, StoreError> {
        self.streams
            .read()
            .get(stream)
            .cloned()
            .ok_or_else(|| StoreError::UnknownStream(stream.to_owned()))
    }

    /// Stores `report` as the stream's latest, renumbered to the next
    /// message id, which is returned.
    pub fn publish(&self, stream: &str, mut report: DetectionReport) -> Result<u64, StoreError> {
        let entry = self.entry(stream)?;
        let mut e = entry.lock();
        e.counter += 1;
        report.message_id = e.counter;
        e.latest = report;
        e.updated_at = Some(SystemTime::now());
        Ok(e.counter)
    }

    pub fn latest(&self, stream: &str) -> Result<StreamSnapshot, StoreError> {
        let entry = self.entry(stream)?;
        let e = entry.lock();
        Ok(StreamSnapshot {
            report: e.latest.clone(),
            updated_at: e.updated_at,
        })
    }

    /// XML for the stream's latest report; MessageID 0 before any result.
    pub fn latest_result(&self, stream: &str) -> Result<String, StoreError> {
        self.latest(stream)
            .map(|snap| render_detection_xml(&snap.report))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XmlError {
    #[error("malformed XML: {0}")]
    Malformed(String),
    #[error("missing or invalid <{0}>")]
    Field(&'static str),
}

/// Reads back a document produced by [`render_detection_xml`].
pub fn parse_detection_xml(text: &str) -> Result<DetectionReport, XmlError> {
    let mut reader = Reader::from_str(text);
    let mut path: Vec<String> = Vec::new();
    let mut message_id = None;
    let mut reference_id = String::new();
    let mut results = Vec::new();
    let mut label: Option<String> = None;
    let mut probability: Option<f64> = None;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| XmlError::Malformed(e.to_string()))?;
        match event {
            Event::Start(e) => {
                path.push(String::from_utf8_lossy(e.name().as_ref()).into_owned());
            }
            Event::End(_) => {
                if path.pop().as_deref() == Some("Result") {
                    let label = label.take().ok_or(XmlError::Field("Class"))?;
                    let probability = probability.take().ok_or(XmlError::Field("Probability"))?;
                    results.push(Detection::new(label, probability));
                }
            }
            Event::Text(t) => {
                let value = t
                    .unescape()
                    .map_err(|e| XmlError::Malformed(e.to_string()))?
                    .into_owned();
                match path.last().map(String::as_str) {
                    Some("MessageID") => {
                        message_id = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| XmlError::Field("MessageID"))?,
                        );
                    }
                    Some("ReferenceID") => reference_id = value,
                    Some("Class") => label = Some(value),
                    Some("Probability") => {
                        probability = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| XmlError::Field("Probability"))?,
                        );
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(DetectionReport {
        message_id: message_id.ok_or(XmlError::Field("MessageID"))?,
        reference_id,
        results,
    })
}

/// Decodes an uploaded frame body: raw JPEG bytes, or base64 text with or
/// without the JPEG data-URL prefix.
pub fn decode_frame_body(body: &[u8]) -> Result<Image, ImageError> {
    if body.starts_with(&[0xFF, 0xD8, 0xFF]) {
        return decode_jpeg(body);
    }
    let text = std::str::from_utf8(body)
        .map_err(|_| ImageError::BadBase64("body is neither JPEG nor UTF-8 text".into()))?;
    decode_base64_image(text)
}
