use super::SceneClassifier;
use crate::types::ImageBuffer;

/// Logistic slope and offset on the mean warm-minus-cool score. Calibrated
/// against rendered scenes under tone jitter (see the calibration test).
const SLOPE: f64 = 40.0;
const OFFSET: f64 = 0.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceSceneClassifier;

impl SceneClassifier for ReferenceSceneClassifier {
    fn indoor_probability(&self, image: &ImageBuffer) -> f64 {
        reference_scene_prob(image)
    }
}

/// Indoor probability from mean hue balance: warm interiors have red above
/// the green/blue average, sky and vegetation below it.
pub fn reference_scene_prob(image: &ImageBuffer) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    let w = image.width() as usize;
    for (i, p) in image.pixels().chunks_exact(3).enumerate() {
        // Every other pixel on every other row is plenty.
        if (i % w) % 2 == 1 || (i / w) % 2 == 1 {
            continue;
        }
        sum += p[0] as f64 - (p[1] as f64 + p[2] as f64) / 2.0;
        n += 1;
    }
    let warmth = sum / (n.max(1) as f64 * 255.0);
    1.0 / (1.0 + (-SLOPE * (warmth - OFFSET)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_bounds() {
        let warm = ImageBuffer::filled(10, 10, [220, 180, 140]).unwrap();
        let cool = ImageBuffer::filled(10, 10, [100, 170, 230]).unwrap();
        let grey = ImageBuffer::filled(10, 10, [128, 128, 128]).unwrap();
        assert!(reference_scene_prob(&warm) > 0.99);
        assert!(reference_scene_prob(&cool) < 0.01);
        assert!((reference_scene_prob(&grey) - 0.5).abs() < 1e-12);
    }
}
