use super::Detector;
use crate::types::{BBox, ImageBuffer};

/// Luma below this counts as glyph border.
pub(crate) const DARK_THRESHOLD: f32 = 58.0;
/// Hysteresis: pixels below this join a border that already has a pixel
/// below [`DARK_THRESHOLD`], which closes rings whose edge got blended.
const WEAK_THRESHOLD: f32 = 75.0;
const MIN_SIDE: usize = 12;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceDetector;

impl Detector for ReferenceDetector {
    fn detect(&self, image: &ImageBuffer) -> Vec<BBox> {
        reference_detect(image)
    }
}

/// Find dark square rings.
///
/// Dark pixels are grouped into 8-connected components, with hysteresis
/// between two luma thresholds. A component counts
/// as a glyph border when it is roughly square, encloses a bright interior,
/// and the enclosed area is centred inside the ring. The returned box is
/// the square with the same area and centroid as the ring plus its interior,
/// which stays tight when the glyph is slightly rotated.
pub fn reference_detect(image: &ImageBuffer) -> Vec<BBox> {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let luma: Vec<f32> = image
        .pixels()
        .chunks_exact(3)
        .map(|p| crate::types::luma(p[0], p[1], p[2]))
        .collect();
    let dark: Vec<bool> = luma.iter().map(|&l| l < WEAK_THRESHOLD).collect();
    let mut label = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    let mut members = Vec::new();
    let mut found = Vec::new();

    for start in 0..w * h {
        if !dark[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        members.clear();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut strong = false;
        while let Some(i) = stack.pop() {
            members.push(i);
            strong |= luma[i] < DARK_THRESHOLD;
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if dark[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if !strong {
            continue;
        }
        let comp = Component {
            id: next,
            x0,
            y0,
            x1,
            y1,
            count: members.len(),
        };
        if let Some(b) = comp.as_glyph(&label, w) {
            found.push(b);
        }
    }
    found
}

struct Component {
    id: u32,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    count: usize,
}

impl Component {
    fn as_glyph(&self, label: &[u32], stride: usize) -> Option<BBox> {
        let bw = self.x1 - self.x0 + 1;
        let bh = self.y1 - self.y0 + 1;
        if bw < MIN_SIDE || bh < MIN_SIDE {
            return None;
        }
        let aspect = bw as f64 / bh as f64;
        if !(0.8..=1.25).contains(&aspect) {
            return None;
        }

        // Flood the complement from a one-pixel margin around the bbox; what
        // it cannot reach is the ring or its enclosed interior.
        let gw = bw + 2;
        let gh = bh + 2;
        let ring = |gx: usize, gy: usize| -> bool {
            if gx == 0 || gy == 0 || gx == gw - 1 || gy == gh - 1 {
                return false;
            }
            label[(self.y0 + gy - 1) * stride + self.x0 + gx - 1] == self.id
        };
        let mut outside = vec![false; gw * gh];
        let mut stack = vec![0usize];
        outside[0] = true;
        while let Some(i) = stack.pop() {
            let (gx, gy) = (i % gw, i / gw);
            let mut visit = |nx: usize, ny: usize| {
                let j = ny * gw + nx;
                if !outside[j] && !ring(nx, ny) {
                    outside[j] = true;
                    stack.push(j);
                }
            };
            if gx > 0 {
                visit(gx - 1, gy);
            }
            if gx + 1 < gw {
                visit(gx + 1, gy);
            }
            if gy > 0 {
                visit(gx, gy - 1);
            }
            if gy + 1 < gh {
                visit(gx, gy + 1);
            }
        }

        let (mut filled, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
        let (mut hole, mut hx, mut hy) = (0usize, 0.0f64, 0.0f64);
        for gy in 1..gh - 1 {
            for gx in 1..gw - 1 {
                let i = gy * gw + gx;
                if outside[i] {
                    continue;
                }
                let (px, py) = ((self.x0 + gx - 1) as f64 + 0.5, (self.y0 + gy - 1) as f64 + 0.5);
                filled += 1;
                sx += px;
                sy += py;
                if !ring(gx, gy) {
                    hole += 1;
                    hx += px;
                    hy += py;
                }
            }
        }
        debug_assert_eq!(filled - hole, self.count);
        if hole == 0 {
            return None;
        }
        let filled_f = filled as f64;
        if filled_f / ((bw * bh) as f64) < 0.78 {
            return None;
        }
        let hole_frac = hole as f64 / filled_f;
        if !(0.25..=0.97).contains(&hole_frac) {
            return None;
        }
        let side = filled_f.sqrt();
        let border = (side - (hole as f64).sqrt()) / 2.0;
        if border < 0.8 || border > 0.3 * side {
            return None;
        }
        let (cx, cy) = (sx / filled_f, sy / filled_f);
        let (hcx, hcy) = (hx / hole as f64, hy / hole as f64);
        if (hcx - cx).hypot(hcy - cy) > 0.1 * side {
            return None;
        }
        BBox::from_center(cx, cy, side, side).ok()
    }
}
