//! Semantic verification: seed matching, transform estimation, per-face
//! classification and the scene check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::SignatureContainer;
use crate::crypto::{self, PublicKey};
use crate::perception::{Embedder, Perception, SceneClassifier};
use crate::registry::TrustRegistry;
use crate::types::{
    BBox, FaceOutcome, FaceOutcomeKind, FaceRecord, FeatureVector, ImageBuffer, RevocationStatus,
    SceneLabel, SceneOutcome, VerificationReport,
};

/// Lower bound (exclusive) on an acceptable scale estimate.
pub const MIN_SCALE: f64 = 0.01;
/// Upper bound (exclusive) on an acceptable scale estimate.
pub const MAX_SCALE: f64 = 100.0;
/// Partial faces are only attempted when this much of the box is visible.
pub const MIN_PARTIAL_VISIBLE: f64 = 0.25;
/// Seeds agree with a hypothesis only if their box-size ratio is this close.
const SCALE_AGREEMENT: f64 = 0.12;
/// How far, as a fraction of the signed dimensions, the current frame may
/// map outside the signed frame (rotation drift and fit noise).
const FRAME_SLACK: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("not enough independent point pairs to fit a transform")]
    Underdetermined,
    #[error("estimated scale {0} is outside the accepted range")]
    DegenerateTransform(f64),
    #[error("notary signature does not verify")]
    SignatureInvalid,
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Cosine similarity needed to accept an identity.
    pub theta: f64,
    /// Confidence needed to assign a scene label.
    pub gamma: f64,
    /// Relative offsets, as fractions of box side, tried on each axis.
    pub jitter_fractions: Vec<f64>,
    pub min_seed_pairs: usize,
    /// Largest rotation about the image centre tolerated when locating faces.
    pub rotation_tolerance_deg: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            theta: 0.7,
            gamma: 0.7,
            jitter_fractions: vec![0.0, -0.05, 0.05, -0.10, 0.10],
            min_seed_pairs: 2,
            rotation_tolerance_deg: 5.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_owned()));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must be in (0, 1)");
        }
        if !(self.gamma >= 0.5 && self.gamma < 1.0) {
            return bad("gamma must be in [0.5, 1)");
        }
        if self.jitter_fractions.is_empty() || self.jitter_fractions.iter().any(|j| !j.is_finite()) {
            return bad("jitter_fractions must be a non-empty list of numbers");
        }
        if self.min_seed_pairs < 2 {
            return bad("min_seed_pairs must be at least 2");
        }
        if !(0.0..=45.0).contains(&self.rotation_tolerance_deg) {
            return bad("rotation_tolerance_deg must be in [0, 45]");
        }
        Ok(())
    }

    /// Every (dx, dy) combination of the jitter fractions.
    pub fn jitter_grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jitter_fractions
            .iter()
            .flat_map(move |&dy| self.jitter_fractions.iter().map(move |&dx| (dx, dy)))
    }
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64, EngineError> {
    if a.dimension() != b.dimension() {
        return Err(EngineError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| x * y)
        .sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub original_index: usize,
    pub current_index: usize,
    pub similarity: f64,
}

/// For each original face, its most similar current face, kept when the
/// similarity reaches `theta`. Ties go to the lowest current index.
pub fn match_seeds(
    original: &[FaceRecord],
    current: &[(BBox, FeatureVector)],
    theta: f64,
) -> Vec<SeedPair> {
    let mut seeds = Vec::new();
    for (k, face) in original.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (l, (_, feature)) in current.iter().enumerate() {
            let Ok(sim) = cosine_similarity(&face.feature, feature) else {
                continue;
            };
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((l, sim));
            }
        }
        if let Some((l, sim)) = best {
            if sim >= theta {
                seeds.push(SeedPair {
                    original_index: k,
                    current_index: l,
                    similarity: sim,
                });
            }
        }
    }
    seeds
}

/// Uniform scale plus translation: `(x, y) -> (s x + alpha, s y + beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl TransformParams {
    pub const IDENTITY: Self = Self {
        s: 1.0,
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(s: f64, alpha: f64, beta: f64) -> Result<Self, EngineError> {
        if !(s > MIN_SCALE && s < MAX_SCALE) || !alpha.is_finite() || !beta.is_finite() {
            return Err(EngineError::DegenerateTransform(s));
        }
        Ok(Self { s, alpha, beta })
    }

    pub fn apply_point(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (self.s * x + self.alpha, self.s * y + self.beta)
    }
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformFit {
    pub params: TransformParams,
    /// Root mean squared point distance after the fit.
    pub residual_rms: f64,
}

/// Least-squares fit of `p' = s p + (alpha, beta)` over point pairs.
///
/// Each pair contributes rows `[x, 1, 0]` and `[y, 0, 1]`; the normal
/// equations are solved in closed form after centring, which is the same
/// solution as `(P^T P)^-1 P^T p'` with better conditioning.
pub fn fit_similarity_transform(
    pairs: &[(Point, Point)],
    min_pairs: usize,
) -> Result<TransformFit, EngineError> {
    if pairs.len() < min_pairs.max(2) {
        return Err(EngineError::Underdetermined);
    }
    let n = pairs.len() as f64;
    let (mut mx, mut my, mut mu, mut mv) = (0.0, 0.0, 0.0, 0.0);
    for &((x, y), (u, v)) in pairs {
        mx += x;
        my += y;
        mu += u;
        mv += v;
    }
    mx /= n;
    my /= n;
    mu /= n;
    mv /= n;
    let (mut sxx, mut sxu) = (0.0, 0.0);
    let mut scale_ref: f64 = 0.0;
    for &((x, y), (u, v)) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx + dy * dy;
        sxu += dx * (u - mu) + dy * (v - mv);
        scale_ref = scale_ref.max(x.abs()).max(y.abs());
    }
    // Coincident source points leave P^T P singular.
    if sxx <= 1e-18 * (1.0 + scale_ref * scale_ref) * n {
        return Err(EngineError::Underdetermined);
    }
    let s = sxu / sxx;
    let params = TransformParams::new(s, mu - s * mx, mv - s * my)?;
    let sq: f64 = pairs
        .iter()
        .map(|&(p, (u, v))| {
            let (px, py) = params.apply_point(p);
            (px - u).powi(2) + (py - v).powi(2)
        })
        .sum();
    Ok(TransformFit {
        params,
        residual_rms: (sq / n).sqrt(),
    })
}

pub fn apply_transform(w: &TransformParams, b: &BBox) -> BBox {
    let (x0, y0) = w.apply_point((b.x_min(), b.y_min()));
    let (x1, y1) = w.apply_point((b.x_max(), b.y_max()));
    BBox::new(x0, y0, x1, y1).expect("positive scale preserves box order")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Inside,
    Partial,
    Outside,
}

pub fn classify_region(b: &BBox, width: u32, height: u32) -> Region {
    let (w, h) = (width as f64, height as f64);
    if b.x_min() >= 0.0 && b.y_min() >= 0.0 && b.x_max() <= w && b.y_max() <= h {
        Region::Inside
    } else if b.visible_area(w, h) <= 0.0 {
        Region::Outside
    } else {
        Region::Partial
    }
}

/// Pixel distance a point may drift under a rotation of up to
/// `rotation_deg` about the image centre.
fn rotation_drift(center: Point, width: u32, height: u32, rotation_deg: f64) -> f64 {
    let r = (center.0 - width as f64 / 2.0).hypot(center.1 - height as f64 / 2.0);
    2.0 * (rotation_deg.to_radians() / 2.0).sin() * r
}

/// How far a face found in the current image may sit from where the
/// transform puts it and still be taken as the same placement.
fn placement_tolerance(expected: &BBox, width: u32, height: u32, config: &EngineConfig) -> f64 {
    let jitter = config
        .jitter_fractions
        .iter()
        .fold(0.0f64, |m, j| m.max(j.abs()));
    jitter * expected.side()
        + rotation_drift(expected.center(), width, height, config.rotation_tolerance_deg)
        + 2.0
}

/// Check one signed face against the current image at the location the
/// transform predicts. Equivalent to [`verify_face_with_detections`] with
/// no detections.
pub fn verify_face(
    image: &ImageBuffer,
    original: &FaceRecord,
    w: &TransformParams,
    embedder: &dyn Embedder,
    config: &EngineConfig,
) -> FaceOutcome {
    verify_face_with_detections(image, original, w, embedder, config, &[])
}

/// Check one signed face.
///
/// The original box is mapped through `w` and classified against the image
/// bounds. In-frame boxes are embedded at every jitter offset; faces the
/// detector found close enough to the predicted box (rotation drift plus
/// jitter) are also considered. The best similarity decides: at least
/// `theta` verifies, otherwise the face is flagged. Partly visible boxes
/// compare only the visible cells and fall back to "cropped" on failure.
pub fn verify_face_with_detections(
    image: &ImageBuffer,
    original: &FaceRecord,
    w: &TransformParams,
    embedder: &dyn Embedder,
    config: &EngineConfig,
    detections: &[(BBox, FeatureVector)],
) -> FaceOutcome {
    let expected = apply_transform(w, &original.bbox);
    let (width, height) = (image.width(), image.height());
    let region = classify_region(&expected, width, height);
    let cropped = FaceOutcome {
        kind: FaceOutcomeKind::Cropped,
        bbox_in_current: None,
        similarity: None,
    };
    if region == Region::Outside {
        return cropped;
    }
    if region == Region::Partial
        && expected.visible_area(width as f64, height as f64) < MIN_PARTIAL_VISIBLE * expected.area()
    {
        return cropped;
    }

    let mut best: Option<(f64, BBox)> = None;
    let mut consider = |sim: f64, b: BBox| {
        if best.is_none_or(|(s, _)| sim > s) {
            best = Some((sim, b));
        }
    };
    let (side_w, side_h) = (expected.width(), expected.height());
    for (dx, dy) in config.jitter_grid() {
        let b = expected.translated(dx * side_w, dy * side_h);
        let sim = match region {
            Region::Inside => embedder
                .embed(image, &b)
                .ok()
                .and_then(|f| cosine_similarity(&original.feature, &f).ok()),
            _ => embedder
                .embed_visible(image, &b)
                .ok()
                .map(|m| m.similarity(&original.feature)),
        };
        if let Some(sim) = sim {
            consider(sim, b);
        }
    }
    let tolerance = placement_tolerance(&expected, width, height, config);
    let (ex, ey) = expected.center();
    for (b, f) in detections {
        let (cx, cy) = b.center();
        let ratio = b.side() / expected.side();
        if (cx - ex).hypot(cy - ey) <= tolerance && (1.0 - SCALE_AGREEMENT..=1.0 / (1.0 - SCALE_AGREEMENT)).contains(&ratio) {
            if let Ok(sim) = cosine_similarity(&original.feature, f) {
                consider(sim, *b);
            }
        }
    }

    match (region, best) {
        (Region::Inside, Some((sim, b))) if sim >= config.theta => FaceOutcome {
            kind: FaceOutcomeKind::Verified,
            bbox_in_current: Some(b),
            similarity: Some(sim),
        },
        (Region::Inside, best) => FaceOutcome {
            kind: FaceOutcomeKind::Tampered,
            bbox_in_current: Some(expected),
            similarity: best.map(|(s, _)| s),
        },
        (_, Some((sim, b))) if sim >= config.theta => FaceOutcome {
            kind: FaceOutcomeKind::VerifiedPartial,
            bbox_in_current: Some(b),
            similarity: Some(sim),
        },
        _ => cropped,
    }
}

/// Scene label implied by indoor probability `q`, if confident enough.
pub fn scene_decision(q: f64, gamma: f64) -> Option<SceneLabel> {
    if q >= gamma {
        Some(SceneLabel::Indoor)
    } else if 1.0 - q > gamma {
        Some(SceneLabel::Outdoor)
    } else {
        None
    }
}

pub fn scene_outcome(q: f64, signed: SceneLabel, gamma: f64) -> SceneOutcome {
    match scene_decision(q, gamma) {
        Some(label) if label == signed => SceneOutcome::Verified,
        Some(_) => SceneOutcome::Failed,
        None => SceneOutcome::LowConfidence,
    }
}

pub fn verify_scene(
    image: &ImageBuffer,
    signed: SceneLabel,
    classifier: &dyn SceneClassifier,
    gamma: f64,
) -> SceneOutcome {
    scene_outcome(classifier.indoor_probability(image), signed, gamma)
}

/// Result of turning seed matches into a transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformEstimate {
    pub params: Option<TransformParams>,
    /// Seeds the final fit used.
    pub inliers: Vec<SeedPair>,
    pub residual_rms: Option<f64>,
    pub warnings: Vec<String>,
}

/// Estimate the benign transform from seed matches.
///
/// No seeds: nothing can be placed. One seed: scale from the box diagonal
/// ratio, translation from the centres. Several: every single seed and
/// every pair of seeds proposes a transform, the proposal that the most
/// seeds agree with (position within the placement tolerance, box size
/// ratio within 12%) wins, and its supporters are refit by least squares.
/// If the refit residual exceeds a tenth of the mean box diagonal, the worst
/// pair is dropped and the fit redone once. When no two seeds agree, the
/// layout is inconsistent and nothing is placed.
///
/// Benign edits only scale, crop and slightly rotate, so the current frame
/// mapped back through a transform must land inside the signed frame. Any
/// transform that fails this is discarded; it would otherwise let a lone
/// swapped-in face "explain" itself as a large shift.
pub fn estimate_transform(
    seeds: &[SeedPair],
    original: &[FaceRecord],
    current: &[(BBox, FeatureVector)],
    signed_size: (u32, u32),
    current_size: (u32, u32),
    config: &EngineConfig,
) -> TransformEstimate {
    let (width, height) = current_size;
    let plausible = |w: &TransformParams| frame_consistent(w, signed_size, current_size);
    let implausible = || TransformEstimate {
        params: None,
        inliers: vec![],
        residual_rms: None,
        warnings: vec![
            "matched faces imply a layout no crop or resize of the signed image produces; unable to place signed faces"
                .into(),
        ],
    };
    let mut warnings = Vec::new();
    let centers = |s: &SeedPair| -> (Point, Point) {
        (
            original[s.original_index].bbox.center(),
            current[s.current_index].0.center(),
        )
    };
    let scale_of = |s: &SeedPair| {
        current[s.current_index].0.diagonal() / original[s.original_index].bbox.diagonal()
    };
    let single = |s: &SeedPair| -> Option<TransformParams> {
        let k = scale_of(s);
        let ((x, y), (u, v)) = centers(s);
        TransformParams::new(k, u - k * x, v - k * y).ok()
    };

    match seeds.len() {
        0 => {
            warnings.push("no signed face could be matched; unable to verify any faces".into());
            return TransformEstimate {
                params: None,
                inliers: vec![],
                residual_rms: None,
                warnings,
            };
        }
        1 => {
            let params = single(&seeds[0]);
            if params.as_ref().is_some_and(|w| !plausible(w)) {
                return implausible();
            }
            return TransformEstimate {
                params,
                inliers: seeds.to_vec(),
                residual_rms: None,
                warnings,
            };
        }
        _ => {}
    }

    let agrees = |w: &TransformParams, s: &SeedPair| -> Option<f64> {
        let expected = apply_transform(w, &original[s.original_index].bbox);
        let (ex, ey) = expected.center();
        let (cx, cy) = current[s.current_index].0.center();
        let d = (ex - cx).hypot(ey - cy);
        let ratio = w.s / scale_of(s);
        let tol = placement_tolerance(&expected, width, height, config);
        (d <= tol && (ratio - 1.0).abs() <= SCALE_AGREEMENT).then_some(d)
    };

    let mut hypotheses: Vec<TransformParams> = seeds.iter().filter_map(single).collect();
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            if let Ok(fit) = fit_similarity_transform(&[centers(&seeds[i]), centers(&seeds[j])], 2) {
                hypotheses.push(fit.params);
            }
        }
    }
    hypotheses.retain(|h| plausible(h));
    let mut best: Option<(usize, f64, Vec<SeedPair>)> = None;
    for h in &hypotheses {
        let mut support = Vec::new();
        let mut cost = 0.0;
        for s in seeds {
            if let Some(d) = agrees(h, s) {
                support.push(*s);
                cost += d;
            }
        }
        let better = match &best {
            None => true,
            Some((n, c, _)) => support.len() > *n || (support.len() == *n && cost < *c),
        };
        if better {
            best = Some((support.len(), cost, support));
        }
    }
    let support = best.map(|b| b.2).unwrap_or_default();
    if support.len() < 2 {
        warnings.push(
            "matched faces are not in a consistent arrangement; unable to place signed faces"
                .into(),
        );
        return TransformEstimate {
            params: None,
            inliers: vec![],
            residual_rms: None,
            warnings,
        };
    }
    if support.len() < seeds.len() {
        warnings.push(format!(
            "{} matched face(s) disagree with the estimated layout",
            seeds.len() - support.len()
        ));
    }

    let fit_of = |set: &[SeedPair]| -> Option<TransformFit> {
        if set.len() < config.min_seed_pairs {
            // Too few for the configured least-squares minimum; fall back to
            // the single-pair estimate of the strongest match.
            let strongest = set
                .iter()
                .max_by(|a, b| a.similarity.total_cmp(&b.similarity))?;
            return single(strongest).map(|params| TransformFit {
                params,
                residual_rms: 0.0,
            });
        }
        let pairs: Vec<_> = set.iter().map(centers).collect();
        fit_similarity_transform(&pairs, config.min_seed_pairs).ok()
    };
    let mut inliers = support;
    let Some(mut fit) = fit_of(&inliers) else {
        warnings.push("transform fit failed; unable to place signed faces".into());
        return TransformEstimate {
            params: None,
            inliers: vec![],
            residual_rms: None,
            warnings,
        };
    };
    let mean_diag = inliers
        .iter()
        .map(|s| current[s.current_index].0.diagonal())
        .sum::<f64>()
        / inliers.len() as f64;
    if fit.residual_rms > 0.1 * mean_diag && inliers.len() > config.min_seed_pairs {
        let worst = inliers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (p, (u, v)) = centers(s);
                let (px, py) = fit.params.apply_point(p);
                (i, (px - u).hypot(py - v))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
        let mut reduced = inliers.clone();
        reduced.remove(worst);
        if let Some(refit) = fit_of(&reduced) {
            fit = refit;
            inliers = reduced;
        }
    }
    if !plausible(&fit.params) {
        return implausible();
    }
    TransformEstimate {
        params: Some(fit.params),
        inliers,
        residual_rms: Some(fit.residual_rms),
        warnings,
    }
}

/// Whether the current frame, mapped back through `w`, stays within the
/// signed frame up to [`FRAME_SLACK`].
pub fn frame_consistent(w: &TransformParams, signed_size: (u32, u32), current_size: (u32, u32)) -> bool {
    let axis = |offset: f64, current: u32, signed: u32| {
        let lo = -offset / w.s;
        let hi = (current as f64 - offset) / w.s;
        let slack = FRAME_SLACK * signed as f64;
        lo >= -slack && hi <= signed as f64 + slack
    };
    axis(w.alpha, current_size.0, signed_size.0) && axis(w.beta, current_size.1, signed_size.1)
}

/// Full verification of a current image against a signature container.
///
/// Order: notary signature, revocation status, detection and embedding,
/// seed matching, transform estimation, per-face checks, scene check.
pub fn verify_image(
    image: &ImageBuffer,
    container: &SignatureContainer,
    notary_key: &PublicKey,
    registry: &TrustRegistry,
    perception: &Perception,
    config: &EngineConfig,
) -> Result<VerificationReport, EngineError> {
    if !crypto::verify(
        notary_key,
        container.payload_bytes(),
        container.signature_bytes(),
    ) {
        return Err(EngineError::SignatureInvalid);
    }
    let payload = container.payload();
    let mut warnings = Vec::new();
    let revocation = registry.revocation_status(&payload.device_id, payload.signed_at);
    match revocation {
        RevocationStatus::Refused => {
            return Ok(VerificationReport::refused(format!(
                "device {:?} is not trusted for signatures dated {}",
                payload.device_id, payload.signed_at
            )));
        }
        RevocationStatus::SignedBeforeRevocation => warnings.push(format!(
            "device {:?} has been revoked; this image was signed before the revocation took effect",
            payload.device_id
        )),
        RevocationStatus::Trusted => {}
    }

    let detections: Vec<(BBox, FeatureVector)> = perception
        .detector
        .detect(image)
        .into_iter()
        .filter_map(|b| perception.embedder.embed(image, &b).ok().map(|f| (b, f)))
        .collect();
    let seeds = match_seeds(&payload.faces, &detections, config.theta);
    let estimate = estimate_transform(
        &seeds,
        &payload.faces,
        &detections,
        (payload.image_width, payload.image_height),
        (image.width(), image.height()),
        config,
    );
    warnings.extend(estimate.warnings.iter().cloned());

    let face_outcomes: Vec<FaceOutcome> = match &estimate.params {
        Some(w) => payload
            .faces
            .iter()
            .map(|face| {
                verify_face_with_detections(
                    image,
                    face,
                    w,
                    perception.embedder.as_ref(),
                    config,
                    &detections,
                )
            })
            .collect(),
        None => payload
            .faces
            .iter()
            .map(|_| FaceOutcome {
                kind: FaceOutcomeKind::Tampered,
                bbox_in_current: None,
                similarity: None,
            })
            .collect(),
    };

    // Detections that no signed face accounts for.
    let claimed: Vec<BBox> = face_outcomes
        .iter()
        .filter_map(|o| o.bbox_in_current)
        .collect();
    let unmatched_new_faces: Vec<BBox> = detections
        .iter()
        .enumerate()
        .filter(|(l, (b, _))| {
            !seeds.iter().any(|s| s.current_index == *l) && !claimed.iter().any(|c| c.iou(b) > 0.3)
        })
        .map(|(_, (b, _))| *b)
        .collect();
    if !unmatched_new_faces.is_empty() {
        warnings.push(format!(
            "{} face(s) in the image were not present at signing",
            unmatched_new_faces.len()
        ));
    }
    let tampered = face_outcomes
        .iter()
        .filter(|o| o.kind == FaceOutcomeKind::Tampered)
        .count();
    if tampered > 0 {
        warnings.push(format!("{tampered} signed face(s) failed verification"));
    }
    let cropped_count = face_outcomes
        .iter()
        .filter(|o| o.kind == FaceOutcomeKind::Cropped)
        .count();
    if cropped_count > 0 {
        warnings.push(format!("{cropped_count} signed face(s) cropped out"));
    }

    let scene_outcome = verify_scene(image, payload.scene, perception.scene.as_ref(), config.gamma);
    if scene_outcome == SceneOutcome::LowConfidence {
        warnings.push("scene label could not be verified with sufficient confidence".into());
    }

    Ok(VerificationReport {
        face_outcomes,
        cropped_count,
        unmatched_new_faces,
        scene_outcome: Some(scene_outcome),
        warnings,
        revocation_status: revocation,
    })
}
