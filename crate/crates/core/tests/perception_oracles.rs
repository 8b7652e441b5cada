//! Reference perception stack against its documented examples.

use proves_core::engine::{cosine_similarity, verify_face, EngineConfig, TransformParams};
use proves_core::imageops::{adjust_brightness, adjust_color, adjust_contrast};
use proves_core::perception::{
    reference_detect, reference_embed, reference_scene_prob, render_scene, GlyphFaceSpec,
    ReferenceEmbedder,
};
use proves_core::{BBox, FaceOutcomeKind, FaceRecord, ImageBuffer, SceneLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(glyphs: &[GlyphFaceSpec]) -> ImageBuffer {
    render_scene(320, 240, SceneLabel::Outdoor, glyphs, 5).unwrap()
}

#[test]
fn detector_finds_rendered_glyph() {
    let img = render_scene(200, 200, SceneLabel::Indoor, &[GlyphFaceSpec::new(1, (100.0, 100.0), 40.0)], 1).unwrap();
    let found = reference_detect(&img);
    assert_eq!(found.len(), 1);
    let truth = BBox::new(80.0, 80.0, 120.0, 120.0).unwrap();
    assert!(found[0].iou(&truth) >= 0.9, "iou {}", found[0].iou(&truth));
}

#[test]
fn same_identity_at_two_positions() {
    let a = GlyphFaceSpec::new(42, (80.0, 80.0), 40.0);
    let b = GlyphFaceSpec::new(42, (230.0, 150.0), 40.0);
    let img = scene(&[a, b]);
    let fa = reference_embed(&img, &a.bbox()).unwrap();
    let fb = reference_embed(&img, &b.bbox()).unwrap();
    assert!(cosine_similarity(&fa, &fb).unwrap() >= 0.99);
}

#[test]
fn same_identity_across_scale() {
    for seed in 0..50 {
        let a = GlyphFaceSpec::new(seed, (80.0, 100.0), 40.0);
        let b = GlyphFaceSpec::new(seed, (220.0, 120.0), 57.0);
        let img = scene(&[a, b]);
        let sim = cosine_similarity(
            &reference_embed(&img, &a.bbox()).unwrap(),
            &reference_embed(&img, &b.bbox()).unwrap(),
        )
        .unwrap();
        assert!(sim >= 0.95, "seed {seed}: {sim}");
    }
}

#[test]
fn distinct_identities_separate() {
    // 10^4 random pairs; the bar is < 0.5 with probability >= 0.999.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut canvas = ImageBuffer::filled(100, 50, [128; 3]).unwrap();
    let boxes = [
        GlyphFaceSpec::new(0, (25.0, 25.0), 40.0).bbox(),
        GlyphFaceSpec::new(0, (75.0, 25.0), 40.0).bbox(),
    ];
    let mut above = 0;
    for _ in 0..10_000 {
        let (s1, s2): (u64, u64) = (rng.random(), rng.random());
        if s1 == s2 {
            continue;
        }
        proves_core::perception::render_glyph(&mut canvas, &GlyphFaceSpec::new(s1, (25.0, 25.0), 40.0));
        proves_core::perception::render_glyph(&mut canvas, &GlyphFaceSpec::new(s2, (75.0, 25.0), 40.0));
        let sim = cosine_similarity(
            &reference_embed(&canvas, &boxes[0]).unwrap(),
            &reference_embed(&canvas, &boxes[1]).unwrap(),
        )
        .unwrap();
        if sim >= 0.5 {
            above += 1;
        }
    }
    assert!(above <= 10, "{above} of 10000 pairs at or above 0.5");
}

fn tone(img: &mut ImageBuffer, rng: &mut ChaCha8Rng) {
    adjust_contrast(img, rng.random_range(0.85..=1.15));
    adjust_brightness(img, rng.random_range(0.85..=1.15));
    adjust_color(img, rng.random_range(0.85..=1.15));
}

#[test]
fn scene_classifier_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000u64 {
        let indoor = render_scene(96, 72, SceneLabel::Indoor, &[], i).unwrap();
        assert!(reference_scene_prob(&indoor) >= 0.9, "indoor scene {i}");
        let mut outdoor = render_scene(96, 72, SceneLabel::Outdoor, &[], i).unwrap();
        adjust_contrast(&mut outdoor, 0.85);
        assert!(reference_scene_prob(&outdoor) <= 0.1, "outdoor scene {i}");

        // The same bounds hold under the full tone jitter.
        let mut a = render_scene(96, 72, SceneLabel::Indoor, &[], i).unwrap();
        tone(&mut a, &mut rng);
        assert!(reference_scene_prob(&a) >= 0.9, "jittered indoor scene {i}");
        let mut b = render_scene(96, 72, SceneLabel::Outdoor, &[], i).unwrap();
        tone(&mut b, &mut rng);
        assert!(reference_scene_prob(&b) <= 0.1, "jittered outdoor scene {i}");
    }
}

#[test]
fn hue_mixed_image_is_ambiguous() {
    let indoor = render_scene(100, 80, SceneLabel::Indoor, &[], 3).unwrap();
    let outdoor = render_scene(100, 80, SceneLabel::Outdoor, &[], 3).unwrap();
    let mut mixed = indoor.clone();
    for y in 0..80 {
        for x in 50..100 {
            mixed.put(x, y, outdoor.get(x, y));
        }
    }
    let q = reference_scene_prob(&mixed);
    assert!(q > 0.1 && q < 0.9, "q = {q}");
}

#[test]
fn verify_face_examples() {
    let g = GlyphFaceSpec::new(9, (100.0, 90.0), 40.0);
    let original = scene(&[g]);
    let record = FaceRecord {
        bbox: g.bbox(),
        feature: reference_embed(&original, &g.bbox()).unwrap(),
    };
    let config = EngineConfig::default();

    // Benign: shifted, slightly larger, darker.
    let w = TransformParams::new(1.1, 12.0, -6.0).unwrap();
    let moved = GlyphFaceSpec::new(9, w.apply_point((100.0, 90.0)), 44.0);
    let mut benign = scene(&[moved]);
    adjust_brightness(&mut benign, 0.9);
    let out = verify_face(&benign, &record, &w, &ReferenceEmbedder, &config);
    assert_eq!(out.kind, FaceOutcomeKind::Verified);
    assert!(out.similarity.unwrap() >= 0.7);

    // Different identity in the same place.
    let swapped = scene(&[GlyphFaceSpec::new(10, (100.0, 90.0), 40.0)]);
    let out = verify_face(&swapped, &record, &TransformParams::IDENTITY, &ReferenceEmbedder, &config);
    assert_eq!(out.kind, FaceOutcomeKind::Tampered);
}
