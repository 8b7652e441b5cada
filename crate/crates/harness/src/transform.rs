//! Benign edits (scale, translate with crop, rotate, tone) and attacks
//! (replace, swap, remove, occlude, crop-out).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use proves_core::imageops::{self, ImageError};
use proves_core::perception::{render_glyph, GlyphFaceSpec};
use proves_core::{BBox, ImageBuffer};

/// Largest per-channel noise an attack may add, in 1/255 units.
pub const MAX_NOISE_BUDGET: f64 = 4.0;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("target index {0} out of range")]
    BadTarget(usize),
    #[error("{0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// One draw of the benign edit suite. All-neutral values leave the image
/// bytewise unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenignTransformSpec {
    pub scale: f64,
    /// Shift as a fraction of the scaled width; content moving off the
    /// canvas is cropped away.
    pub translate_x: f64,
    pub translate_y: f64,
    pub rotate: f64,
    pub contrast: f64,
    pub brightness: f64,
    pub color: f64,
    pub rng_seed: u64,
}

impl Default for BenignTransformSpec {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl BenignTransformSpec {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        translate_x: 0.0,
        translate_y: 0.0,
        rotate: 0.0,
        contrast: 1.0,
        brightness: 1.0,
        color: 1.0,
        rng_seed: 0,
    };

    /// Draw from the standard ranges: scale and tone factors U[0.85, 1.15],
    /// shifts U[-0.15, 0.15], rotation U[-max_rotation, max_rotation].
    pub fn sample(rng_seed: u64, max_rotation: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut factor = || rng.random_range(0.85..=1.15);
        let (scale, contrast, brightness, color) = (factor(), factor(), factor(), factor());
        let translate_x = rng.random_range(-0.15..=0.15);
        let translate_y = rng.random_range(-0.15..=0.15);
        let rotate = if max_rotation > 0.0 {
            rng.random_range(-max_rotation..=max_rotation)
        } else {
            0.0
        };
        Self {
            scale,
            translate_x,
            translate_y,
            rotate,
            contrast,
            brightness,
            color,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let ok = self.scale > 0.0
            && self.translate_x.abs() < 1.0
            && self.translate_y.abs() < 1.0
            && self.rotate.abs() <= 45.0
            && [self.contrast, self.brightness, self.color]
                .iter()
                .all(|f| (0.0..=4.0).contains(f));
        if ok {
            Ok(())
        } else {
            Err(TransformError::InvalidSpec(format!("out-of-range benign spec {self:?}")))
        }
    }
}

/// Where original-image points end up after a benign edit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMap {
    sx: f64,
    sy: f64,
    crop_x: f64,
    crop_y: f64,
    out_w: u32,
    out_h: u32,
    rotate: f64,
}

impl PointMap {
    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (px, py) = (x * self.sx - self.crop_x, y * self.sy - self.crop_y);
        imageops::rotate_point(self.out_w, self.out_h, self.rotate, px, py)
    }

    /// The four corners of `b` mapped into the output, clockwise.
    pub fn quad(&self, b: &BBox) -> [(f64, f64); 4] {
        [
            self.apply((b.x_min(), b.y_min())),
            self.apply((b.x_max(), b.y_min())),
            self.apply((b.x_max(), b.y_max())),
            self.apply((b.x_min(), b.y_max())),
        ]
    }

    pub fn output_size(&self) -> (u32, u32) {
        (self.out_w, self.out_h)
    }
}

pub fn apply_benign(
    image: &ImageBuffer,
    spec: &BenignTransformSpec,
) -> Result<(ImageBuffer, PointMap), TransformError> {
    spec.validate()?;
    let (w, h) = (image.width(), image.height());
    let sw = ((w as f64 * spec.scale).round() as u32).max(1);
    let sh = ((h as f64 * spec.scale).round() as u32).max(1);
    let scaled = if (sw, sh) == (w, h) {
        image.clone()
    } else {
        imageops::resize(image, sw, sh)?
    };
    let dx = (spec.translate_x * sw as f64).round() as i64;
    let dy = (spec.translate_y * sh as f64).round() as i64;
    // A positive shift pushes the right/bottom part off the canvas; a
    // negative one the left/top part.
    let (x0, out_w) = (if dx < 0 { (-dx) as u32 } else { 0 }, sw - dx.unsigned_abs() as u32);
    let (y0, out_h) = (if dy < 0 { (-dy) as u32 } else { 0 }, sh - dy.unsigned_abs() as u32);
    let mut out = if (x0, y0, out_w, out_h) == (0, 0, sw, sh) {
        scaled
    } else {
        imageops::crop(&scaled, x0, y0, out_w, out_h)?
    };
    out = imageops::rotate(&out, spec.rotate);
    imageops::adjust_contrast(&mut out, spec.contrast);
    imageops::adjust_brightness(&mut out, spec.brightness);
    imageops::adjust_color(&mut out, spec.color);
    let map = PointMap {
        sx: sw as f64 / w as f64,
        sy: sh as f64 / h as f64,
        crop_x: x0 as f64,
        crop_y: y0 as f64,
        out_w,
        out_h,
        rotate: spec.rotate,
    };
    Ok((out, map))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum AttackKind {
    Replace,
    Swap,
    Remove,
    Occlude,
    CropOut,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Replace => "replace",
            AttackKind::Swap => "swap",
            AttackKind::Remove => "remove",
            AttackKind::Occlude => "occlude",
            AttackKind::CropOut => "crop-out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Indices into the face boxes handed to [`apply_attack`]. Swap needs
    /// exactly two; the others take one or more.
    pub targets: Vec<usize>,
    /// Uniform per-channel noise added inside attacked boxes, in 1/255.
    pub noise_budget: f64,
    pub rng_seed: u64,
}

/// Result of an attack: the new image, and for crop-out the offset of the
/// kept window in original coordinates.
#[derive(Debug, Clone)]
pub struct Attacked {
    pub image: ImageBuffer,
    pub crop_origin: Option<(u32, u32)>,
}

/// Pixel rectangle covered by a box, clipped to the image.
fn pixel_rect(b: &BBox, image: &ImageBuffer) -> (u32, u32, u32, u32) {
    let x0 = b.x_min().floor().max(0.0) as u32;
    let y0 = b.y_min().floor().max(0.0) as u32;
    let x1 = (b.x_max().ceil().max(0.0) as u32).min(image.width());
    let y1 = (b.y_max().ceil().max(0.0) as u32).min(image.height());
    (x0, y0, x1.max(x0), y1.max(y0))
}

/// Apply an attack against the given face boxes. Pixels outside the
/// attacked boxes are untouched, except for crop-out.
pub fn apply_attack(
    image: &ImageBuffer,
    faces: &[BBox],
    spec: &AttackSpec,
) -> Result<Attacked, TransformError> {
    if !(0.0..=MAX_NOISE_BUDGET).contains(&spec.noise_budget) {
        return Err(TransformError::InvalidSpec(format!(
            "noise budget {} outside [0, {MAX_NOISE_BUDGET}]",
            spec.noise_budget
        )));
    }
    if let Some(&bad) = spec.targets.iter().find(|&&t| t >= faces.len()) {
        return Err(TransformError::BadTarget(bad));
    }
    if spec.targets.is_empty() {
        return Err(TransformError::InvalidSpec("attack needs a target".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut out = image.clone();
    match spec.kind {
        AttackKind::Replace => {
            for &t in &spec.targets {
                let b = faces[t];
                let (cx, cy) = b.center();
                let glyph = GlyphFaceSpec::new(rng.random(), (cx, cy), b.width().max(b.height()));
                render_glyph(&mut out, &glyph);
            }
        }
        AttackKind::Swap => {
            let [a, b] = spec.targets[..] else {
                return Err(TransformError::InvalidSpec("swap needs exactly two targets".into()));
            };
            if a == b {
                return Err(TransformError::InvalidSpec("swap targets must differ".into()));
            }
            paste_resampled(image, &faces[a], &mut out, &faces[b]);
            paste_resampled(image, &faces[b], &mut out, &faces[a]);
        }
        AttackKind::Remove => {
            for &t in &spec.targets {
                fill_with_background(&mut out, &faces[t], &mut rng);
            }
        }
        AttackKind::Occlude => {
            for &t in &spec.targets {
                let (x0, y0, x1, y1) = pixel_rect(&faces[t], &out);
                for y in y0..y1 {
                    for x in x0..x1 {
                        out.put(x, y, [128, 128, 128]);
                    }
                }
            }
        }
        AttackKind::CropOut => {
            let (crop, origin) = crop_out(image, faces, &spec.targets)?;
            return Ok(Attacked {
                image: crop,
                crop_origin: Some(origin),
            });
        }
    }
    if spec.noise_budget > 0.0 {
        for &t in &spec.targets {
            let (x0, y0, x1, y1) = pixel_rect(&faces[t], &out);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = out.get(x, y).map(|c| {
                        let n = rng.random_range(-spec.noise_budget..=spec.noise_budget);
                        (c as f64 + n).round().clamp(0.0, 255.0) as u8
                    });
                    out.put(x, y, p);
                }
            }
        }
    }
    Ok(Attacked {
        image: out,
        crop_origin: None,
    })
}

/// Resample the content of `from` in `src` into box `to` of `dst`.
fn paste_resampled(src: &ImageBuffer, from: &BBox, dst: &mut ImageBuffer, to: &BBox) {
    let (x0, y0, x1, y1) = pixel_rect(to, dst);
    for y in y0..y1 {
        let v = (y as f64 + 0.5 - to.y_min()) / to.height();
        for x in x0..x1 {
            let u = (x as f64 + 0.5 - to.x_min()) / to.width();
            let sx = from.x_min() + u * from.width() - 0.5;
            let sy = from.y_min() + v * from.height() - 0.5;
            let [r, g, b] = imageops::sample_bilinear(src, sx, sy);
            dst.put(x, y, [r, g, b].map(|c| c.round().clamp(0.0, 255.0) as u8));
        }
    }
}

/// Paint over a box with the mean colour of a ring just outside it, plus
/// mild noise, so the erased area blends into the surroundings.
fn fill_with_background(image: &mut ImageBuffer, b: &BBox, rng: &mut ChaCha8Rng) {
    let (x0, y0, x1, y1) = pixel_rect(b, image);
    let margin = 4u32;
    let (rx0, ry0) = (x0.saturating_sub(margin), y0.saturating_sub(margin));
    let (rx1, ry1) = ((x1 + margin).min(image.width()), (y1 + margin).min(image.height()));
    let mut sum = [0.0f64; 3];
    let mut n = 0.0;
    for y in ry0..ry1 {
        for x in rx0..rx1 {
            if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                continue;
            }
            let p = image.get(x, y);
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            n += 1.0;
        }
    }
    let mean = if n > 0.0 { sum.map(|s| s / n) } else { [128.0; 3] };
    for y in y0..y1 {
        for x in x0..x1 {
            let noise = rng.random_range(-5.0..5.0);
            image.put(x, y, mean.map(|c| (c + noise).round().clamp(0.0, 255.0) as u8));
        }
    }
}

/// Largest axis-aligned window that excludes every target box entirely and
/// keeps as much of the image as possible. Tries the four sides.
fn crop_out(
    image: &ImageBuffer,
    faces: &[BBox],
    targets: &[usize],
) -> Result<(ImageBuffer, (u32, u32)), TransformError> {
    let (w, h) = (image.width(), image.height());
    let t: Vec<BBox> = targets.iter().map(|&i| faces[i]).collect();
    let left = t.iter().map(|b| b.x_max().ceil() as u32).max().unwrap_or(0).min(w);
    let right = t.iter().map(|b| b.x_min().floor().max(0.0) as u32).min().unwrap_or(w);
    let top = t.iter().map(|b| b.y_max().ceil() as u32).max().unwrap_or(0).min(h);
    let bottom = t.iter().map(|b| b.y_min().floor().max(0.0) as u32).min().unwrap_or(h);
    let options = [
        (left, 0, w - left, h),
        (0, 0, right, h),
        (0, top, w, h - top),
        (0, 0, w, bottom),
    ];
    let (x0, y0, cw, ch) = options
        .into_iter()
        .filter(|o| o.2 > 0 && o.3 > 0)
        .max_by_key(|o| o.2 as u64 * o.3 as u64)
        .ok_or_else(|| TransformError::InvalidSpec("targets cover the whole image".into()))?;
    Ok((imageops::crop(image, x0, y0, cw, ch)?, (x0, y0)))
}

/// Area of a simple polygon (shoelace).
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Clip a convex polygon to the rectangle `[0, w] x [0, h]`.
pub fn clip_to_rect(poly: &[(f64, f64)], w: f64, h: f64) -> Vec<(f64, f64)> {
    type Edge = (fn((f64, f64), f64) -> f64, f64);
    // Signed distance inside each half-plane.
    let edges: [Edge; 4] = [
        (|p, _| p.0, 0.0),
        (|p, w| w - p.0, w),
        (|p, _| p.1, 0.0),
        (|p, h| h - p.1, h),
    ];
    let mut out = poly.to_vec();
    for (dist, limit) in edges {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (a, b) = (input[i], input[(i + 1) % input.len()]);
            let (da, db) = (dist(a, limit), dist(b, limit));
            if da >= 0.0 {
                out.push(a);
            }
            if (da >= 0.0) != (db >= 0.0) {
                let t = da / (da - db);
                out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
    }
    out
}

/// Fraction of the quad's area inside a `w x h` frame.
pub fn visible_fraction(quad: &[(f64, f64)], w: u32, h: u32) -> f64 {
    let area = polygon_area(quad);
    if area <= 0.0 {
        return 0.0;
    }
    polygon_area(&clip_to_rect(quad, w as f64, h as f64)) / area
}
