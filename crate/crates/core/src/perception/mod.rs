//! Face detection, identity embedding and scene classification.
//!
//! Each role is a trait so real models can be plugged in later. The
//! reference backend works on synthetic "glyph faces": dark-bordered squares
//! carrying an 8x8 identity pattern.

mod detect;
mod embed;
mod glyph;
mod scene;

use std::sync::Arc;

use thiserror::Error;

use crate::types::{BBox, FeatureVector, ImageBuffer, TypeError};

pub use detect::{reference_detect, ReferenceDetector};
pub use embed::{reference_embed, reference_embed_visible, ReferenceEmbedder, EMBEDDING_DIM};
pub use glyph::{glyph_pattern, render_glyph, render_scene, render_background, GlyphFaceSpec, GLYPH_BORDER, MIN_GLYPH_SIZE};
pub use scene::{reference_scene_prob, ReferenceSceneClassifier};

/// Config key selecting the perception backend.
pub const BACKEND_KEY: &str = "perception.backend";

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("region has too few visible pixels or no variance")]
    DegenerateRegion,
    #[error("glyphs {0} and {1} overlap by more than 20% of the smaller one")]
    GlyphOverlap(usize, usize),
    #[error("glyph {0}: {1}")]
    InvalidGlyph(usize, &'static str),
    #[error("unknown perception backend {0:?}")]
    UnknownBackend(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Finds face boxes. Must be deterministic and return boxes that intersect
/// the image.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &ImageBuffer) -> Vec<BBox>;
}

/// Feature of a region whose box may stick out of the image: one value per
/// component plus a visibility mask. Masked values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFeature {
    pub values: Vec<f64>,
    pub visible: Vec<bool>,
}

impl MaskedFeature {
    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }

    /// Pearson correlation with `reference` over the visible components.
    /// Equals cosine similarity when everything is visible and both sides
    /// are zero-mean.
    pub fn similarity(&self, reference: &FeatureVector) -> f64 {
        let r = reference.components();
        if r.len() != self.values.len() {
            return -1.0;
        }
        let idx: Vec<usize> = (0..r.len()).filter(|&i| self.visible[i]).collect();
        if idx.len() < 2 {
            return -1.0;
        }
        let n = idx.len() as f64;
        let mean_a = idx.iter().map(|&i| self.values[i]).sum::<f64>() / n;
        let mean_b = idx.iter().map(|&i| r[i]).sum::<f64>() / n;
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for &i in &idx {
            let a = self.values[i] - mean_a;
            let b = r[i] - mean_b;
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if na <= 0.0 || nb <= 0.0 {
            return -1.0;
        }
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Maps a face region to a fixed-dimension, unit-norm identity vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, image: &ImageBuffer, bbox: &BBox) -> Result<FeatureVector, PerceptionError>;

    /// Embedding of a box that is only partly inside the image. The default
    /// embeds the clipped box and marks every component visible.
    fn embed_visible(
        &self,
        image: &ImageBuffer,
        bbox: &BBox,
    ) -> Result<MaskedFeature, PerceptionError> {
        let clipped = BBox::new(
            bbox.x_min().max(0.0),
            bbox.y_min().max(0.0),
            bbox.x_max().min(image.width() as f64),
            bbox.y_max().min(image.height() as f64),
        )
        .map_err(|_| PerceptionError::DegenerateRegion)?;
        let f = self.embed(image, &clipped)?;
        Ok(MaskedFeature {
            visible: vec![true; f.dimension()],
            values: f.components().to_vec(),
        })
    }
}

/// Probability that the image shows the reference class (indoor).
pub trait SceneClassifier: Send + Sync {
    fn indoor_probability(&self, image: &ImageBuffer) -> f64;
}

#[derive(Clone)]
pub struct Perception {
    pub detector: Arc<dyn Detector>,
    pub embedder: Arc<dyn Embedder>,
    pub scene: Arc<dyn SceneClassifier>,
}

impl std::fmt::Debug for Perception {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Perception")
            .field("dimension", &self.embedder.dimension())
            .finish_non_exhaustive()
    }
}

impl Perception {
    pub fn reference() -> Self {
        Self {
            detector: Arc::new(ReferenceDetector),
            embedder: Arc::new(ReferenceEmbedder),
            scene: Arc::new(ReferenceSceneClassifier),
        }
    }

    pub fn from_backend(name: &str) -> Result<Self, PerceptionError> {
        match name {
            "reference" => Ok(Self::reference()),
            other => Err(PerceptionError::UnknownBackend(other.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_similarity_matches_cosine_when_fully_visible() {
        let a = FeatureVector::new(vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        let m = MaskedFeature {
            values: vec![1.0, -1.0, 2.0, -2.0],
            visible: vec![true; 4],
        };
        assert!((m.similarity(&a) - 1.0).abs() < 1e-12);
        let neg = MaskedFeature {
            values: vec![-1.0, 1.0, -2.0, 2.0],
            visible: vec![true; 4],
        };
        assert!((neg.similarity(&a) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_similarity_ignores_hidden_components() {
        let a = FeatureVector::new(vec![1.0, 2.0, 3.0, 100.0]).unwrap();
        let m = MaskedFeature {
            values: vec![10.0, 20.0, 30.0, 0.0],
            visible: vec![true, true, true, false],
        };
        assert!((m.similarity(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_backend_is_rejected() {
        assert!(Perception::from_backend("reference").is_ok());
        assert!(matches!(
            Perception::from_backend("mtcnn"),
            Err(PerceptionError::UnknownBackend(_))
        ));
    }
}
