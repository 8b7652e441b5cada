//! Shared domain model: images, boxes, identity features and signed payloads.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted image side, in pixels.
pub const MAX_IMAGE_SIDE: u32 = 16384;

/// Longest accepted device identifier, in UTF-8 bytes.
pub const MAX_DEVICE_ID_LEN: usize = 128;

/// Faces smaller than this fraction of the image area are dropped at signing.
pub const MIN_FACE_AREA_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("image dimensions {width}x{height} out of range")]
    BadDimensions { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    PixelLength { expected: usize, actual: usize },
    #[error("bounding box is empty or non-finite")]
    DegenerateBox,
    #[error("feature vector is empty, non-finite or zero")]
    DegenerateFeature,
    #[error("device id must be 1..={MAX_DEVICE_ID_LEN} bytes without control characters")]
    BadDeviceId,
    #[error("face {index} does not intersect the image")]
    FaceOutsideImage { index: usize },
    #[error("face {index} is below the minimum signed area")]
    FaceTooSmall { index: usize },
}

/// Row-major RGB8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, TypeError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(TypeError::PixelLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, TypeError> {
        check_dimensions(width, height)?;
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma per pixel, row-major.
    pub fn luminance(&self) -> Vec<f32> {
        self.pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> f32 {
    0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32
}

fn check_dimensions(width: u32, height: u32) -> Result<(), TypeError> {
    if width == 0 || height == 0 || width > MAX_IMAGE_SIDE || height > MAX_IMAGE_SIDE {
        return Err(TypeError::BadDimensions { width, height });
    }
    Ok(())
}

/// Axis-aligned box in sub-pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, TypeError> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(TypeError::DegenerateBox);
        }
        // `+ 0.0` folds -0.0 into +0.0 so the encoding stays canonical.
        Ok(Self {
            x_min: x_min + 0.0,
            y_min: y_min + 0.0,
            x_max: x_max + 0.0,
            y_max: y_max + 0.0,
        })
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, TypeError> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Mean side length.
    pub fn side(&self) -> f64 {
        (self.width() + self.height()) / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Area of the part of the box inside `[0,width] x [0,height]`.
    pub fn visible_area(&self, width: f64, height: f64) -> f64 {
        let w = self.x_max.min(width) - self.x_min.max(0.0);
        let h = self.y_max.min(height) - self.y_min.max(0.0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        inter / (self.area() + other.area() - inter)
    }
}

/// Identity feature vector; never zero, always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(components: Vec<f64>) -> Result<Self, TypeError> {
        if components.is_empty() || components.iter().any(|v| !v.is_finite()) {
            return Err(TypeError::DegenerateFeature);
        }
        let components: Vec<f64> = components.into_iter().map(|v| v + 0.0).collect();
        if components.iter().all(|v| *v == 0.0) {
            return Err(TypeError::DegenerateFeature);
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = TypeError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(value: FeatureVector) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub bbox: BBox,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SceneLabel {
    Indoor,
    Outdoor,
}

impl SceneLabel {
    pub fn code(self) -> u8 {
        match self {
            SceneLabel::Indoor => 0,
            SceneLabel::Outdoor => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SceneLabel::Indoor),
            1 => Some(SceneLabel::Outdoor),
            _ => None,
        }
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneLabel::Indoor => f.write_str("indoor"),
            SceneLabel::Outdoor => f.write_str("outdoor"),
        }
    }
}

/// Seconds since the Unix epoch, UTC.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn to_rfc3339(self) -> String {
        chrono::DateTime::from_timestamp(self.0 as i64, 0)
            .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_else(|| self.0.to_string())
    }

    pub fn parse_rfc3339(s: &str) -> Option<Self> {
        let t = chrono::DateTime::parse_from_rfc3339(s.trim()).ok()?;
        u64::try_from(t.timestamp()).ok().map(Timestamp)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

pub fn validate_device_id(id: &str) -> Result<(), TypeError> {
    if id.is_empty() || id.len() > MAX_DEVICE_ID_LEN || id.chars().any(char::is_control) {
        return Err(TypeError::BadDeviceId);
    }
    Ok(())
}

/// Everything the notary signs about one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPayload {
    pub image_width: u32,
    pub image_height: u32,
    pub faces: Vec<FaceRecord>,
    pub scene: SceneLabel,
    pub device_id: String,
    pub signed_at: Timestamp,
}

impl SemanticPayload {
    pub fn validate(&self) -> Result<(), TypeError> {
        check_dimensions(self.image_width, self.image_height)?;
        validate_device_id(&self.device_id)?;
        let (w, h) = (self.image_width as f64, self.image_height as f64);
        let min_area = MIN_FACE_AREA_FRACTION * w * h;
        for (index, face) in self.faces.iter().enumerate() {
            if face.bbox.visible_area(w, h) <= 0.0 {
                return Err(TypeError::FaceOutsideImage { index });
            }
            if face.bbox.area() < min_area {
                return Err(TypeError::FaceTooSmall { index });
            }
        }
        Ok(())
    }

    /// Signing order: `(y_min, x_min)` ascending, ties on `x_max`.
    pub fn sort_faces(faces: &mut [FaceRecord]) {
        faces.sort_by(|a, b| {
            let ka = (a.bbox.y_min, a.bbox.x_min, a.bbox.x_max);
            let kb = (b.bbox.y_min, b.bbox.x_min, b.bbox.x_max);
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
    }
}

/// A payload together with the notary's signature over its canonical bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSignature {
    pub payload: SemanticPayload,
    pub notary_signature: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceOutcomeKind {
    Verified,
    VerifiedPartial,
    Tampered,
    Cropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceOutcome {
    pub kind: FaceOutcomeKind,
    pub bbox_in_current: Option<BBox>,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SceneOutcome {
    Verified,
    Failed,
    LowConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RevocationStatus {
    Trusted,
    SignedBeforeRevocation,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub face_outcomes: Vec<FaceOutcome>,
    pub cropped_count: usize,
    pub unmatched_new_faces: Vec<BBox>,
    pub scene_outcome: Option<SceneOutcome>,
    pub warnings: Vec<String>,
    pub revocation_status: RevocationStatus,
}

impl VerificationReport {
    pub fn refused(warning: String) -> Self {
        Self {
            face_outcomes: Vec::new(),
            cropped_count: 0,
            unmatched_new_faces: Vec::new(),
            scene_outcome: None,
            warnings: vec![warning],
            revocation_status: RevocationStatus::Refused,
        }
    }

    pub fn count(&self, kind: FaceOutcomeKind) -> usize {
        self.face_outcomes.iter().filter(|o| o.kind == kind).count()
    }

    pub fn all_faces_verified(&self) -> bool {
        self.face_outcomes
            .iter()
            .all(|o| o.kind == FaceOutcomeKind::Verified)
    }

    pub fn any_tampered(&self) -> bool {
        self.count(FaceOutcomeKind::Tampered) > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_lengths_and_sizes() {
        assert!(ImageBuffer::new(2, 2, vec![0; 12]).is_ok());
        assert_eq!(
            ImageBuffer::new(2, 2, vec![0; 11]),
            Err(TypeError::PixelLength {
                expected: 12,
                actual: 11
            })
        );
        assert!(ImageBuffer::new(0, 5, vec![]).is_err());
        assert!(ImageBuffer::filled(MAX_IMAGE_SIDE + 1, 1, [0; 3]).is_err());
    }

    #[test]
    fn bbox_invariants() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
        let b = BBox::new(-0.0, 0.0, 4.0, 2.0).unwrap();
        assert!(b.x_min().is_sign_positive());
        assert_eq!(b.area(), 8.0);
        assert_eq!(b.center(), (2.0, 1.0));
        assert_eq!(b.visible_area(3.0, 3.0), 6.0);
    }

    #[test]
    fn feature_rejects_zero() {
        assert!(FeatureVector::new(vec![0.0, 0.0]).is_err());
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(FeatureVector::new(vec![3.0, 4.0]).unwrap().norm(), 5.0);
    }

    #[test]
    fn timestamp_iso_round_trip() {
        let t = Timestamp(1_700_000_000);
        assert_eq!(t.to_rfc3339(), "2023-11-14T22:13:20Z");
        assert_eq!(Timestamp::parse_rfc3339("2023-11-14T22:13:20Z"), Some(t));
    }

    #[test]
    fn payload_validation_filters() {
        let face = |b: BBox| FaceRecord {
            bbox: b,
            feature: FeatureVector::new(vec![1.0]).unwrap(),
        };
        let mut p = SemanticPayload {
            image_width: 100,
            image_height: 100,
            faces: vec![face(BBox::new(10.0, 10.0, 30.0, 30.0).unwrap())],
            scene: SceneLabel::Indoor,
            device_id: "cam".into(),
            signed_at: Timestamp(0),
        };
        assert!(p.validate().is_ok());
        p.faces.push(face(BBox::new(0.0, 0.0, 5.0, 5.0).unwrap()));
        assert_eq!(p.validate(), Err(TypeError::FaceTooSmall { index: 1 }));
        p.faces[1] = face(BBox::new(200.0, 200.0, 230.0, 230.0).unwrap());
        assert_eq!(p.validate(), Err(TypeError::FaceOutsideImage { index: 1 }));
        p.faces.pop();
        p.device_id = "bad\tid".into();
        assert_eq!(p.validate(), Err(TypeError::BadDeviceId));
    }

    #[test]
    fn faces_sort_by_row_then_column() {
        let f = |x: f64, y: f64, w: f64| FaceRecord {
            bbox: BBox::new(x, y, x + w, y + w).unwrap(),
            feature: FeatureVector::new(vec![1.0]).unwrap(),
        };
        let mut faces = vec![f(50.0, 10.0, 5.0), f(5.0, 20.0, 5.0), f(5.0, 10.0, 8.0), f(5.0, 10.0, 5.0)];
        SemanticPayload::sort_faces(&mut faces);
        let keys: Vec<_> = faces.iter().map(|f| f.bbox.corners()).collect();
        assert_eq!(keys[0], [5.0, 10.0, 10.0, 15.0]);
        assert_eq!(keys[1], [5.0, 10.0, 13.0, 18.0]);
        assert_eq!(keys[2], [50.0, 10.0, 55.0, 15.0]);
        assert_eq!(keys[3], [5.0, 20.0, 10.0, 25.0]);
    }
}
