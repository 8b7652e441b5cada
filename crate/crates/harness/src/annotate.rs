//! Verification overlay: blue boxes for verified faces, red for tampered,
//! and a "cropped: N" caption.

use proves_core::{BBox, FaceOutcomeKind, ImageBuffer, VerificationReport};

pub const BLUE: [u8; 3] = [0, 0, 255];
pub const RED: [u8; 3] = [255, 0, 0];
pub const STROKE: u32 = 3;

pub fn draw_rect(image: &mut ImageBuffer, b: &BBox, color: [u8; 3], stroke: u32) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x0 = b.x_min().round() as i64;
    let y0 = b.y_min().round() as i64;
    let x1 = b.x_max().round() as i64 - 1;
    let y1 = b.y_max().round() as i64 - 1;
    let s = stroke as i64;
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            let edge = x - x0 < s || x1 - x < s || y - y0 < s || y1 - y < s;
            if edge {
                image.put(x as u32, y as u32, color);
            }
        }
    }
}

/// 5x7 glyphs for the caption characters, one row per byte, MSB left.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
        '1' => [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
        '2' => [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
        '3' => [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
        '4' => [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
        '5' => [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
        '6' => [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
        '7' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
        '9' => [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
        'c' => [0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e],
        'd' => [0x01, 0x01, 0x0d, 0x13, 0x11, 0x11, 0x0f],
        'e' => [0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e],
        'o' => [0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e],
        'p' => [0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10],
        'r' => [0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10],
        ':' => [0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00],
        _ => [0; 7],
    }
}

/// Draw `text` at (x, y) on a white plate, `scale` pixels per font dot.
pub fn draw_text(image: &mut ImageBuffer, text: &str, x: u32, y: u32, scale: u32) {
    let n = text.chars().count() as u32;
    let (pw, ph) = ((6 * n + 1) * scale, 9 * scale);
    for py in y..(y + ph).min(image.height()) {
        for px in x..(x + pw).min(image.width()) {
            image.put(px, py, [255; 3]);
        }
    }
    for (i, c) in text.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..5u32 {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = x + (1 + 6 * i as u32 + col) * scale + dx;
                        let py = y + (1 + row as u32) * scale + dy;
                        if px < image.width() && py < image.height() {
                            image.put(px, py, [0; 3]);
                        }
                    }
                }
            }
        }
    }
}

pub fn annotate(image: &ImageBuffer, report: &VerificationReport) -> ImageBuffer {
    let mut out = image.clone();
    for o in &report.face_outcomes {
        let color = match o.kind {
            FaceOutcomeKind::Verified | FaceOutcomeKind::VerifiedPartial => BLUE,
            FaceOutcomeKind::Tampered => RED,
            FaceOutcomeKind::Cropped => continue,
        };
        if let Some(b) = &o.bbox_in_current {
            draw_rect(&mut out, b, color, STROKE);
        }
    }
    let scale = if out.width() >= 300 { 2 } else { 1 };
    draw_text(&mut out, &format!("cropped: {}", report.cropped_count), 2, 2, scale);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proves_core::{FaceOutcome, RevocationStatus};

    fn report(kind: FaceOutcomeKind) -> VerificationReport {
        VerificationReport {
            face_outcomes: vec![FaceOutcome {
                kind,
                bbox_in_current: Some(BBox::new(20.0, 30.0, 60.0, 70.0).unwrap()),
                similarity: Some(0.9),
            }],
            cropped_count: 1,
            unmatched_new_faces: vec![],
            scene_outcome: None,
            warnings: vec![],
            revocation_status: RevocationStatus::Trusted,
        }
    }

    #[test]
    fn boxes_use_outcome_colours_and_stroke() {
        let img = ImageBuffer::filled(100, 100, [50; 3]).unwrap();
        let blue = annotate(&img, &report(FaceOutcomeKind::Verified));
        assert_eq!(blue.get(20, 50), BLUE);
        assert_eq!(blue.get(22, 50), BLUE);
        assert_eq!(blue.get(23, 50), [50; 3]);
        assert_eq!(blue.get(59, 69), BLUE);
        let red = annotate(&img, &report(FaceOutcomeKind::Tampered));
        assert_eq!(red.get(40, 30), RED);
    }

    #[test]
    fn caption_is_drawn_top_left() {
        let img = ImageBuffer::filled(100, 100, [50; 3]).unwrap();
        let out = annotate(&img, &report(FaceOutcomeKind::Cropped));
        assert_eq!(out.get(2, 2), [255; 3]);
        let dark = (2..60).flat_map(|x| (2..11).map(move |y| (x, y))).filter(|&(x, y)| out.get(x, y) == [0; 3]).count();
        assert!(dark > 20);
        // Cropped faces get no box.
        assert_eq!(out.get(20, 50), [50; 3]);
    }
}
