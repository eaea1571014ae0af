// SPDX-License-Identifier: Apache-2.0

use base64::Engine;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const JPEG_DATA_URL_PREFIX: &str = "data:image/jpeg;base64,";

/// 8-bit RGB raster, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("unsupported data URL prefix {0:?}")]
    BadPrefix(String),
    #[error("invalid base64: {0}")]
    BadBase64(String),
    #[error("invalid JPEG: {0}")]
    BadJpeg(String),
    #[error("pixel buffer length {actual} does not match {width}x{height} RGB")]
    BadLength {
        width: u32,
        height: u32,
        actual: usize,
    },
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(ImageError::BadLength {
                width,
                height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// SHA-256 over dimensions and pixels, lowercase hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.data);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_jpeg(&self, quality: u8) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
        enc.encode(
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .expect("in-memory JPEG encoding");
        out
    }
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<Image, ImageError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| ImageError::BadJpeg(e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    Image::new(w, h, decoded.into_raw())
}

/// Accepts a bare base64 body or a `data:image/jpeg;base64,` URL.
pub fn decode_base64_image(text: &str) -> Result<Image, ImageError> {
    let text = text.trim();
    let body = if let Some(rest) = text.strip_prefix(JPEG_DATA_URL_PREFIX) {
        rest
    } else if text.starts_with("data:") {
        let prefix = text.split_once(',').map_or(text, |(p, _)| p);
        return Err(ImageError::BadPrefix(prefix.to_owned()));
    } else {
        text
    };
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(body.as_bytes())
        .map_err(|e| ImageError::BadBase64(e.to_string()))?;
    decode_jpeg(&bytes)
}

pub fn to_data_url(jpeg: &[u8]) -> String {
    let mut s = String::from(JPEG_DATA_URL_PREFIX);
    base64::engine::general_purpose::STANDARD.encode_string(jpeg, &mut s);
    s
}
