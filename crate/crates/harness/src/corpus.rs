//! Random synthetic scenes for experiments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use proves_core::perception::{render_scene, GlyphFaceSpec, PerceptionError};
use proves_core::{ImageBuffer, SceneLabel};

pub const BENCH_WIDTH: u32 = 384;
pub const BENCH_HEIGHT: u32 = 288;
pub const MIN_SIZE: f64 = 28.0;
pub const MAX_SIZE: f64 = 44.0;

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: ImageBuffer,
    pub glyphs: Vec<GlyphFaceSpec>,
    pub label: SceneLabel,
}

fn random_label(rng: &mut ChaCha8Rng) -> SceneLabel {
    if rng.random_bool(0.5) {
        SceneLabel::Indoor
    } else {
        SceneLabel::Outdoor
    }
}

/// Minimum centre distance between two glyphs: well clear of each other so
/// jittered boxes never reach a neighbour.
fn spacing(a: f64, b: f64) -> f64 {
    (1.25 * a.max(b) + 8.0).max((a + b) / 2.0 + 8.0)
}

/// `faces` non-overlapping glyphs at random positions, fully inside a
/// `width x height` image.
pub fn random_scene(
    rng: &mut ChaCha8Rng,
    width: u32,
    height: u32,
    faces: usize,
) -> Result<Scene, PerceptionError> {
    let label = random_label(rng);
    let mut glyphs: Vec<GlyphFaceSpec> = Vec::with_capacity(faces);
    let margin = 4.0;
    let mut attempts = 0;
    while glyphs.len() < faces {
        attempts += 1;
        if attempts > 20_000 {
            // Dense layouts occasionally paint themselves into a corner.
            glyphs.clear();
            attempts = 0;
        }
        let size = rng.random_range(MIN_SIZE..=MAX_SIZE);
        let half = size / 2.0 + margin;
        let cx = rng.random_range(half..width as f64 - half);
        let cy = rng.random_range(half..height as f64 - half);
        let clear = glyphs.iter().all(|g| {
            (g.center.0 - cx).hypot(g.center.1 - cy) >= spacing(g.size, size)
        });
        if clear {
            glyphs.push(GlyphFaceSpec::new(rng.random(), (cx, cy), size));
        }
    }
    let image = render_scene(width, height, label, &glyphs, rng.random())?;
    Ok(Scene {
        image,
        glyphs,
        label,
    })
}

/// `faces` glyphs, one per vertical band, left to right, so a vertical cut
/// between bands separates them cleanly.
pub fn banded_scene(
    rng: &mut ChaCha8Rng,
    width: u32,
    height: u32,
    faces: usize,
) -> Result<Scene, PerceptionError> {
    let label = random_label(rng);
    let band = width as f64 / faces as f64;
    let gap = 12.0;
    let max_size = MAX_SIZE.min(band - gap);
    let glyphs: Vec<GlyphFaceSpec> = (0..faces)
        .map(|i| {
            let size = rng.random_range(MIN_SIZE.min(max_size)..=max_size);
            let lo = i as f64 * band + gap / 2.0 + size / 2.0;
            let hi = (i + 1) as f64 * band - gap / 2.0 - size / 2.0;
            let cx = if hi > lo { rng.random_range(lo..=hi) } else { (lo + hi) / 2.0 };
            let cy = rng.random_range(size / 2.0 + 4.0..=height as f64 - size / 2.0 - 4.0);
            GlyphFaceSpec::new(rng.random(), (cx, cy), size)
        })
        .collect();
    let image = render_scene(width, height, label, &glyphs, rng.random())?;
    Ok(Scene {
        image,
        glyphs,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn scenes_respect_spacing_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=10 {
            let s = random_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k).unwrap();
            assert_eq!(s.glyphs.len(), k);
            for (i, a) in s.glyphs.iter().enumerate() {
                let b = a.bbox();
                assert!(b.x_min() >= 0.0 && b.x_max() <= BENCH_WIDTH as f64);
                assert!(b.y_min() >= 0.0 && b.y_max() <= BENCH_HEIGHT as f64);
                for c in &s.glyphs[i + 1..] {
                    assert_eq!(b.intersection_area(&c.bbox()), 0.0);
                }
            }
        }
    }

    #[test]
    fn bands_are_ordered_and_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 2..=6 {
            let s = banded_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k).unwrap();
            for w in s.glyphs.windows(2) {
                assert!(w[0].bbox().x_max() < w[1].bbox().x_min());
            }
        }
    }
}
