use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PerceptionError;
use crate::types::{BBox, ImageBuffer, SceneLabel};

/// Border thickness of a rendered glyph, in pixels.
pub const GLYPH_BORDER: f64 = 3.0;
pub const MIN_GLYPH_SIZE: f64 = 16.0;

pub(crate) const BORDER_LEVEL: u8 = 12;
pub(crate) const DARK_CELL: u8 = 100;
pub(crate) const BRIGHT_CELL: u8 = 240;

/// A synthetic face: identity pattern, position and side length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphFaceSpec {
    pub identity_seed: u64,
    pub center: (f64, f64),
    pub size: f64,
}

impl GlyphFaceSpec {
    pub fn new(identity_seed: u64, center: (f64, f64), size: f64) -> Self {
        Self {
            identity_seed,
            center,
            size,
        }
    }

    /// Ground-truth outer box of the rendered square.
    pub fn bbox(&self) -> BBox {
        BBox::from_center(self.center.0, self.center.1, self.size, self.size)
            .expect("glyph size is positive")
    }
}

/// 8x8 identity pattern: exactly half the cells bright, shuffled by seed.
pub fn glyph_pattern(identity_seed: u64) -> [[u8; 8]; 8] {
    let mut rng = ChaCha8Rng::seed_from_u64(identity_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut cells = [false; 64];
    cells[..32].fill(true);
    cells.shuffle(&mut rng);
    let mut out = [[DARK_CELL; 8]; 8];
    for (i, bright) in cells.iter().enumerate() {
        if *bright {
            out[i / 8][i % 8] = BRIGHT_CELL;
        }
    }
    out
}

fn pattern_sample(pattern: &[[u8; 8]; 8], u: f64, v: f64) -> f64 {
    let u = u.clamp(0.0, 7.0);
    let v = v.clamp(0.0, 7.0);
    let (u0, v0) = (u.floor() as usize, v.floor() as usize);
    let (u1, v1) = ((u0 + 1).min(7), (v0 + 1).min(7));
    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
    let top = pattern[v0][u0] as f64 * (1.0 - fu) + pattern[v0][u1] as f64 * fu;
    let bottom = pattern[v1][u0] as f64 * (1.0 - fu) + pattern[v1][u1] as f64 * fu;
    top * (1.0 - fv) + bottom * fv
}

/// Paint a glyph onto `image`: a solid dark border and the pattern scaled
/// bilinearly across the interior. A pixel belongs to the glyph when its
/// center lies inside the square.
pub fn render_glyph(image: &mut ImageBuffer, glyph: &GlyphFaceSpec) {
    render_pattern(image, glyph, &glyph_pattern(glyph.identity_seed));
}

pub(crate) fn render_pattern(image: &mut ImageBuffer, glyph: &GlyphFaceSpec, pattern: &[[u8; 8]; 8]) {
    let b = glyph.bbox();
    let inner = glyph.size - 2.0 * GLYPH_BORDER;
    let x_start = b.x_min().floor().max(0.0) as u32;
    let y_start = b.y_min().floor().max(0.0) as u32;
    let x_end = (b.x_max().ceil().max(0.0) as u32).min(image.width());
    let y_end = (b.y_max().ceil().max(0.0) as u32).min(image.height());
    for y in y_start..y_end {
        let py = y as f64 + 0.5;
        if py < b.y_min() || py >= b.y_max() {
            continue;
        }
        for x in x_start..x_end {
            let px = x as f64 + 0.5;
            if px < b.x_min() || px >= b.x_max() {
                continue;
            }
            let edge = (px - b.x_min())
                .min(b.x_max() - px)
                .min(py - b.y_min())
                .min(b.y_max() - py);
            let level = if edge < GLYPH_BORDER {
                BORDER_LEVEL
            } else {
                let u = (px - b.x_min() - GLYPH_BORDER) / inner * 8.0 - 0.5;
                let v = (py - b.y_min() - GLYPH_BORDER) / inner * 8.0 - 0.5;
                pattern_sample(pattern, u, v).round() as u8
            };
            image.put(x, y, [level; 3]);
        }
    }
}

/// Scene background. Indoor: warm, low-saturation wall with a darker floor
/// band. Outdoor: blue sky over green ground. Mild luma noise throughout.
pub fn render_background(
    width: u32,
    height: u32,
    scene: SceneLabel,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBuffer, PerceptionError> {
    let mut img = ImageBuffer::filled(width, height, [0; 3])?;
    let h = height as f64;
    match scene {
        SceneLabel::Indoor => {
            let r = rng.random_range(188.0..212.0);
            let wall = [r, r - rng.random_range(18.0..30.0), r - rng.random_range(40.0..58.0)];
            let floor_y = rng.random_range(0.7..0.85) * h;
            for y in 0..height {
                let shade = if (y as f64) < floor_y {
                    1.0 - 0.08 * (y as f64 / h)
                } else {
                    0.82
                };
                for x in 0..width {
                    let n = rng.random_range(-5.0..5.0);
                    img.put(x, y, wall.map(|c| (c * shade + n).round().clamp(0.0, 255.0) as u8));
                }
            }
        }
        SceneLabel::Outdoor => {
            let horizon = rng.random_range(0.45..0.65) * h;
            let sky = [
                rng.random_range(110.0..145.0),
                rng.random_range(168.0..192.0),
                rng.random_range(225.0..245.0),
            ];
            let ground = [
                rng.random_range(75.0..105.0),
                rng.random_range(140.0..165.0),
                rng.random_range(55.0..85.0),
            ];
            for y in 0..height {
                let yf = y as f64;
                let color = if yf < horizon {
                    let lift = 20.0 * yf / horizon;
                    [sky[0] + lift, sky[1] + lift * 0.5, sky[2]]
                } else {
                    let shade = 1.0 - 0.1 * (yf - horizon) / (h - horizon).max(1.0);
                    ground.map(|c| c * shade)
                };
                for x in 0..width {
                    let n = rng.random_range(-5.0..5.0);
                    img.put(x, y, color.map(|c| (c + n).round().clamp(0.0, 255.0) as u8));
                }
            }
        }
    }
    Ok(img)
}

fn check_glyphs(width: u32, height: u32, glyphs: &[GlyphFaceSpec]) -> Result<(), PerceptionError> {
    for (i, g) in glyphs.iter().enumerate() {
        if g.size.is_nan() || g.size < MIN_GLYPH_SIZE || !g.center.0.is_finite() || !g.center.1.is_finite() {
            return Err(PerceptionError::InvalidGlyph(i, "size below 16 px or non-finite center"));
        }
        if g.bbox().visible_area(width as f64, height as f64) <= 0.0 {
            return Err(PerceptionError::InvalidGlyph(i, "glyph lies outside the image"));
        }
    }
    for i in 0..glyphs.len() {
        for j in i + 1..glyphs.len() {
            let (a, b) = (glyphs[i].bbox(), glyphs[j].bbox());
            if a.intersection_area(&b) > 0.2 * a.area().min(b.area()) {
                return Err(PerceptionError::GlyphOverlap(i, j));
            }
        }
    }
    Ok(())
}

/// Deterministic synthetic scene: background chosen by `scene`, glyphs
/// painted in order.
pub fn render_scene(
    width: u32,
    height: u32,
    scene: SceneLabel,
    glyphs: &[GlyphFaceSpec],
    rng_seed: u64,
) -> Result<ImageBuffer, PerceptionError> {
    check_glyphs(width, height, glyphs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut img = render_background(width, height, scene, &mut rng)?;
    for g in glyphs {
        render_glyph(&mut img, g);
    }
    Ok(img)
}
