//! JSON request schemas of the HTTP service and their conversion into core
//! requests. Images travel as base64 PNG; colors are RGB in `[0, 1]`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sketchedit_core::editor::{ColorStroke, CopyPasteRequest, EditRequest, IrisCircle, PenStroke};
use sketchedit_core::geom::Point;

use crate::imageio;

/// Malformed payload: the JSON path of the offending field and a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

fn default_width() -> f32 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenJson {
    pub points: Vec<[f32; 2]>,
    #[serde(default)]
    pub erase: bool,
    #[serde(default = "default_width")]
    pub width: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorJson {
    pub points: Vec<[f32; 2]>,
    pub rgb: [f32; 3],
    pub thickness: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrisJson {
    pub center: [f32; 2],
    pub radius: f32,
    pub rgb: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditPayload {
    pub image: String,
    pub mask: String,
    #[serde(default)]
    pub pen: Vec<PenJson>,
    #[serde(default)]
    pub color: Vec<ColorJson>,
    #[serde(default)]
    pub iris: Vec<IrisJson>,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyPastePayload {
    pub source: String,
    pub source_mask: String,
    pub target: String,
    pub offset: [i64; 2],
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub sketch: String,
    pub color: String,
}

/// Parses JSON, reporting the path of the first offending field.
pub fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, FieldError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        FieldError::new(if path == "." { "" } else { &path }, e.into_inner().to_string())
    })
}

pub fn b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

fn unb64(s: &str, field: &str) -> Result<Vec<u8>, FieldError> {
    STANDARD.decode(s).map_err(|e| FieldError::new(field, format!("invalid base64: {e}")))
}

fn point(p: [f32; 2]) -> Point {
    Point::new(p[0], p[1])
}

fn rgb_image(s: &str, field: &str) -> Result<sketchedit_core::RasterImage, FieldError> {
    imageio::decode_rgb(&unb64(s, field)?, field).map_err(|e| FieldError::new(field, e.to_string()))
}

fn mask_image(s: &str, field: &str) -> Result<sketchedit_core::BinaryMask, FieldError> {
    imageio::decode_mask(&unb64(s, field)?, field).map_err(|e| FieldError::new(field, e.to_string()))
}

impl EditPayload {
    /// Decodes images and copies geometry; semantic checks are left to the
    /// core request.
    pub fn to_request(&self) -> Result<EditRequest, FieldError> {
        Ok(EditRequest {
            image: rgb_image(&self.image, "image")?,
            mask: mask_image(&self.mask, "mask")?,
            pen: self.pen.iter().map(|s| PenStroke { points: s.points.iter().copied().map(point).collect(), erase: s.erase, width: s.width }).collect(),
            color: self.color.iter().map(|s| ColorStroke { points: s.points.iter().copied().map(point).collect(), color: s.rgb, thickness: s.thickness }).collect(),
            iris: self.iris.iter().map(|c| IrisCircle { center: point(c.center), radius: c.radius, color: c.rgb }).collect(),
            noise_seed: self.noise_seed,
        })
    }
}

impl CopyPastePayload {
    pub fn to_request(&self) -> Result<CopyPasteRequest, FieldError> {
        Ok(CopyPasteRequest {
            source: rgb_image(&self.source, "source")?,
            source_mask: mask_image(&self.source_mask, "source_mask")?,
            target: rgb_image(&self.target, "target")?,
            offset: (self.offset[0] as isize, self.offset[1] as isize),
            noise_seed: self.noise_seed,
        })
    }
}
