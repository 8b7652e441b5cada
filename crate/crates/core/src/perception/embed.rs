use super::detect::DARK_THRESHOLD;
use super::{Embedder, MaskedFeature, PerceptionError};
use crate::imageops::sample_luma;
use crate::types::{BBox, FeatureVector, ImageBuffer};

pub const EMBEDDING_DIM: usize = 64;
const GRID: usize = 8;
const STD_EPSILON: f64 = 1e-8;
/// Border thickness assumed when none can be measured, as a fraction of side.
const DEFAULT_BORDER_FRACTION: f64 = 0.075;
const SUBSAMPLES: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmbedder;

impl Embedder for ReferenceEmbedder {
    fn dimension(&self) -> usize {
        EMBEDDING_DIM
    }

    fn embed(&self, image: &ImageBuffer, bbox: &BBox) -> Result<FeatureVector, PerceptionError> {
        reference_embed(image, bbox)
    }

    fn embed_visible(
        &self,
        image: &ImageBuffer,
        bbox: &BBox,
    ) -> Result<MaskedFeature, PerceptionError> {
        reference_embed_visible(image, bbox)
    }
}

/// Crop `bbox`, strip the border, resample the interior to 8x8 luma cells,
/// standardise and scale to unit length.
pub fn reference_embed(image: &ImageBuffer, bbox: &BBox) -> Result<FeatureVector, PerceptionError> {
    let cells = sample_cells(image, bbox)?;
    let values: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let normalized = standardize(&values, &[true; EMBEDDING_DIM])?;
    Ok(FeatureVector::new(normalized)?)
}

/// As [`reference_embed`], but cells whose centre falls outside the image
/// are masked instead of edge-clamped. Needs at least a quarter of the
/// cells visible.
pub fn reference_embed_visible(
    image: &ImageBuffer,
    bbox: &BBox,
) -> Result<MaskedFeature, PerceptionError> {
    let cells = sample_cells(image, bbox)?;
    let visible: Vec<bool> = cells.iter().map(|c| c.1).collect();
    if visible.iter().filter(|v| **v).count() < EMBEDDING_DIM / 4 {
        return Err(PerceptionError::DegenerateRegion);
    }
    let values: Vec<f64> = cells.iter().map(|c| c.0).collect();
    Ok(MaskedFeature {
        values: standardize(&values, &visible)?,
        visible,
    })
}

fn standardize(values: &[f64], visible: &[bool]) -> Result<Vec<f64>, PerceptionError> {
    let n = visible.iter().filter(|v| **v).count() as f64;
    let mean = values
        .iter()
        .zip(visible)
        .filter(|(_, v)| **v)
        .map(|(x, _)| *x)
        .sum::<f64>()
        / n;
    let var = values
        .iter()
        .zip(visible)
        .filter(|(_, v)| **v)
        .map(|(x, _)| (x - mean).powi(2))
        .sum::<f64>()
        / n;
    if var < 1e-6 {
        return Err(PerceptionError::DegenerateRegion);
    }
    let std = var.sqrt() + STD_EPSILON;
    let mut z: Vec<f64> = values
        .iter()
        .zip(visible)
        .map(|(x, v)| if *v { (x - mean) / std } else { 0.0 })
        .collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter_mut().for_each(|v| *v /= norm);
    Ok(z)
}

/// Mean luma of each interior cell and whether its centre is in the image.
fn sample_cells(image: &ImageBuffer, bbox: &BBox) -> Result<Vec<(f64, bool)>, PerceptionError> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    if bbox.visible_area(w, h) < 16.0 {
        return Err(PerceptionError::DegenerateRegion);
    }
    let [left, top, right, bottom] = inner_edges(image, bbox);
    let (iw, ih) = (right - left, bottom - top);
    if iw < 4.0 || ih < 4.0 {
        return Err(PerceptionError::DegenerateRegion);
    }
    let (cw, ch) = (iw / GRID as f64, ih / GRID as f64);
    let mut cells = Vec::with_capacity(EMBEDDING_DIM);
    for r in 0..GRID {
        for c in 0..GRID {
            let cx0 = left + c as f64 * cw;
            let cy0 = top + r as f64 * ch;
            let center = (cx0 + 0.5 * cw, cy0 + 0.5 * ch);
            let visible = (0.0..w).contains(&center.0) && (0.0..h).contains(&center.1);
            let mut sum = 0.0;
            for fy in SUBSAMPLES {
                for fx in SUBSAMPLES {
                    sum += sample_luma(image, cx0 + fx * cw - 0.5, cy0 + fy * ch - 0.5);
                }
            }
            cells.push((sum / (SUBSAMPLES.len() * SUBSAMPLES.len()) as f64, visible));
        }
    }
    Ok(cells)
}

/// Inner edges of the glyph border, measured along scan lines running inward
/// from each side of the box. The border thickness is the median dark-run
/// length; a side with no usable scan lines is placed one interior width
/// away from the opposite side, or at the box edge plus the thickness.
fn inner_edges(image: &ImageBuffer, bbox: &BBox) -> [f64; 4] {
    let side = bbox.side();
    let mut inner: [Vec<f64>; 4] = Default::default();
    let mut runs = Vec::new();
    for (k, offsets) in inner.iter_mut().enumerate() {
        for t in [0.3, 0.4, 0.5, 0.6, 0.7] {
            if let Some((start, end)) = scan_border(image, bbox, k, t, side) {
                offsets.push(end);
                runs.push(end - start);
            }
        }
    }
    let border = if runs.len() >= 3 {
        median(&runs)
    } else {
        DEFAULT_BORDER_FRACTION * side
    };
    let offset = |k: usize| (inner[k].len() >= 2).then(|| median(&inner[k]));
    let span = |lo: f64, hi: f64, lo_off: Option<f64>, hi_off: Option<f64>| -> (f64, f64) {
        let interior = (hi - lo) - 2.0 * border;
        match (lo_off, hi_off) {
            (Some(a), Some(b)) => (lo + a, hi - b),
            (Some(a), None) => (lo + a, lo + a + interior),
            (None, Some(b)) => (hi - b - interior, hi - b),
            (None, None) => (lo + border, hi - border),
        }
    };
    let (left, right) = span(bbox.x_min(), bbox.x_max(), offset(0), offset(2));
    let (top, bottom) = span(bbox.y_min(), bbox.y_max(), offset(1), offset(3));
    [left, top, right, bottom]
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// First complete dark run met when walking inward across one side of the
/// box, as `(outer, inner)` distances from the box edge (positive inward).
/// The walk starts outside the box so a box that sits slightly inside the
/// glyph still finds its border. `side_index`: 0 left, 1 top, 2 right,
/// 3 bottom.
fn scan_border(
    image: &ImageBuffer,
    bbox: &BBox,
    side_index: usize,
    t: f64,
    side: f64,
) -> Option<(f64, f64)> {
    const STEP: f64 = 0.25;
    let (w, h) = (image.width() as f64, image.height() as f64);
    let (origin, dir) = match side_index {
        0 => ((bbox.x_min(), bbox.y_min() + t * bbox.height()), (1.0, 0.0)),
        1 => ((bbox.x_min() + t * bbox.width(), bbox.y_min()), (0.0, 1.0)),
        2 => ((bbox.x_max(), bbox.y_min() + t * bbox.height()), (-1.0, 0.0)),
        _ => ((bbox.x_min() + t * bbox.width(), bbox.y_max()), (0.0, -1.0)),
    };
    let at = |s: f64| -> Option<f64> {
        let x = origin.0 + dir.0 * s;
        let y = origin.1 + dir.1 * s;
        if x < 0.0 || y < 0.0 || x >= w || y >= h {
            return None;
        }
        Some(sample_luma(image, x - 0.5, y - 0.5))
    };
    let threshold = DARK_THRESHOLD as f64;
    let crossing = |s: f64, a: f64, b: f64| s + (threshold - a) / (b - a) * STEP;
    let search_end = 0.25 * side;
    let max_run = 0.3 * side;

    // Off-image samples count as light, so a border touching the image
    // edge still registers as a run.
    let mut s = -(0.15 * side + 2.0);
    let mut prev = at(s);
    let mut seen_light = prev.is_none_or(|v| v >= threshold);
    let start = loop {
        let next = s + STEP;
        if next > search_end {
            return None;
        }
        let v = at(next);
        match (prev, v) {
            (_, Some(v)) if v < threshold && seen_light => {
                let start = match prev {
                    Some(p) => crossing(s, p, v),
                    None => next,
                };
                s = next;
                break start;
            }
            (_, v) => seen_light |= v.is_none_or(|v| v >= threshold),
        }
        s = next;
        prev = v;
    };
    let mut prev = at(s)?;
    loop {
        let next = s + STEP;
        if next - start > max_run {
            return None;
        }
        let v = at(next)?;
        if v >= threshold {
            return Some((start, crossing(s, prev, v)));
        }
        s = next;
        prev = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{render_scene, GlyphFaceSpec};
    use crate::types::SceneLabel;

    fn cos(a: &FeatureVector, b: &FeatureVector) -> f64 {
        a.components()
            .iter()
            .zip(b.components())
            .map(|(x, y)| x * y)
            .sum::<f64>()
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let g = GlyphFaceSpec::new(8, (60.0, 60.0), 40.0);
        let img = render_scene(120, 120, SceneLabel::Indoor, &[g], 1).unwrap();
        let a = reference_embed(&img, &g.bbox()).unwrap();
        let b = reference_embed(&img, &g.bbox()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), EMBEDDING_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_pattern_at_nominal_size() {
        let g = GlyphFaceSpec::new(8, (60.0, 60.0), 46.0);
        let img = render_scene(120, 120, SceneLabel::Indoor, &[g], 1).unwrap();
        let f = reference_embed(&img, &g.bbox()).unwrap();
        let pattern = crate::perception::glyph_pattern(8);
        let truth: Vec<f64> = pattern.iter().flatten().map(|v| *v as f64).collect();
        let truth = FeatureVector::new(standardize(&truth, &[true; 64]).unwrap()).unwrap();
        // Bilinear rendering bleeds ~20% of each neighbour into the
        // subsamples, so the raw step pattern is not reachable exactly.
        assert!(cos(&f, &truth) > 0.98, "{}", cos(&f, &truth));
    }

    #[test]
    fn flat_region_is_degenerate() {
        let img = ImageBuffer::filled(50, 50, [120, 120, 120]).unwrap();
        let b = BBox::new(10.0, 10.0, 40.0, 40.0).unwrap();
        assert_eq!(reference_embed(&img, &b), Err(PerceptionError::DegenerateRegion));
        let tiny = BBox::new(-10.0, -10.0, 2.0, 2.0).unwrap();
        assert_eq!(reference_embed(&img, &tiny), Err(PerceptionError::DegenerateRegion));
    }

    #[test]
    fn partial_embedding_masks_outside_cells() {
        let g = GlyphFaceSpec::new(21, (10.0, 50.0), 40.0);
        let img = render_scene(100, 100, SceneLabel::Outdoor, &[g], 4).unwrap();
        let m = reference_embed_visible(&img, &g.bbox()).unwrap();
        // Left quarter of the interior (two cell columns) is off-image.
        assert!(m.visible_count() < 64 && m.visible_count() >= 32);
        let full_img = render_scene(100, 100, SceneLabel::Outdoor, &[GlyphFaceSpec::new(21, (50.0, 50.0), 40.0)], 4).unwrap();
        let full = reference_embed(&full_img, &GlyphFaceSpec::new(21, (50.0, 50.0), 40.0).bbox()).unwrap();
        assert!(m.similarity(&full) > 0.9, "{}", m.similarity(&full));
    }
}
