//! Experiment runner: benign acceptance, attack rejection and crop
//! accounting over randomized synthetic images.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use proves_core::imageops::encode_png;
use proves_core::notary::{device_sign, SignRequest};
use proves_core::perception::GlyphFaceSpec;
use proves_core::{BBox, FaceOutcomeKind, KeyPair, SignatureContainer, VerificationReport};
use proves_server::{ApiError, NotaryApi};

use crate::corpus::{self, Scene, BENCH_HEIGHT, BENCH_WIDTH};
use crate::transform::{
    apply_attack, apply_benign, visible_fraction, AttackKind, AttackSpec, BenignTransformSpec,
    MAX_NOISE_BUDGET,
};

pub const BENCH_DEVICE: &str = "bench-device";

/// Per-trial generator: stream `trial` of the run seed, so results do not
/// depend on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub images: usize,
    /// Fixed face count, or random in 1..=10 when `None`.
    pub faces_per_image: Option<usize>,
    pub max_rotation: f64,
    pub attack_trials: usize,
    pub crop_trials: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            images: 500,
            faces_per_image: None,
            max_rotation: 0.0,
            attack_trials: 500,
            crop_trials: 200,
            seed: 1,
            parallel: true,
        }
    }
}

/// Device key used for all bench signing; registered on first use.
pub fn bench_device() -> KeyPair {
    KeyPair::from_seed(0xbe9c)
}

pub fn ensure_registered(api: &dyn NotaryApi) -> Result<(), ApiError> {
    match api.register(BENCH_DEVICE, &bench_device().public_key().to_sec1_bytes()) {
        Err(ApiError::Status { code: 409, .. }) | Ok(()) => Ok(()),
        Err(e) => Err(e),
    }
}

pub fn sign_scene(api: &dyn NotaryApi, scene: &Scene) -> Result<SignatureContainer, ApiError> {
    let request = SignRequest {
        device_id: BENCH_DEVICE.into(),
        image: encode_png(&scene.image).map_err(|e| ApiError::Protocol(e.to_string()))?,
        device_signature: device_sign(&bench_device(), &scene.image),
    };
    Ok(api.sign(&request)?.container)
}

/// Index of the signed face that corresponds to each glyph, if any.
pub fn match_glyphs(container: &SignatureContainer, glyphs: &[GlyphFaceSpec]) -> Vec<Option<usize>> {
    let faces = &container.payload().faces;
    glyphs
        .iter()
        .map(|g| {
            let truth = g.bbox();
            faces
                .iter()
                .enumerate()
                .map(|(i, f)| (i, f.bbox.iou(&truth)))
                .filter(|(_, iou)| *iou >= 0.5)
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        })
        .collect()
}

fn verify_image(
    api: &dyn NotaryApi,
    image: &proves_core::ImageBuffer,
    container: &SignatureContainer,
) -> Result<VerificationReport, ApiError> {
    let png = encode_png(image).map_err(|e| ApiError::Protocol(e.to_string()))?;
    let bytes = container
        .to_bytes()
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    api.verify(&png, Some(&bytes))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenignStats {
    pub images: usize,
    /// Signed faces whose true location stays fully inside the edited image.
    pub in_frame: usize,
    pub verified: usize,
    pub verified_partial: usize,
    pub tampered: usize,
    pub cropped: usize,
    /// Signed faces that end up partly inside the frame.
    pub partial_faces: usize,
    pub partial_verified: usize,
    pub partial_tampered: usize,
    /// Glyphs the notary did not sign (not detected at signing time).
    pub unsigned: usize,
    pub genuine_similarities: Vec<f64>,
}

impl BenignStats {
    fn merge(mut self, o: Self) -> Self {
        self.images += o.images;
        self.in_frame += o.in_frame;
        self.verified += o.verified;
        self.verified_partial += o.verified_partial;
        self.tampered += o.tampered;
        self.cropped += o.cropped;
        self.partial_faces += o.partial_faces;
        self.partial_verified += o.partial_verified;
        self.partial_tampered += o.partial_tampered;
        self.unsigned += o.unsigned;
        self.genuine_similarities.extend(o.genuine_similarities);
        self
    }

    pub fn verified_rate(&self) -> f64 {
        ratio(self.verified + self.verified_partial, self.in_frame)
    }

    pub fn fail_rate(&self) -> f64 {
        ratio(self.tampered, self.in_frame)
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn face_count(rng: &mut ChaCha8Rng, fixed: Option<usize>, min: usize) -> usize {
    fixed.unwrap_or_else(|| rng.random_range(min.max(1)..=10)).max(min)
}

pub fn benign_trial(
    api: &dyn NotaryApi,
    opts: &BenchOptions,
    trial: u64,
) -> Result<BenignStats, ApiError> {
    let mut rng = trial_rng(opts.seed, trial);
    let k = face_count(&mut rng, opts.faces_per_image, 1);
    let scene = corpus::random_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k)
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    let container = sign_scene(api, &scene)?;
    let spec = BenignTransformSpec::sample(rng.random(), opts.max_rotation);
    let (edited, map) = apply_benign(&scene.image, &spec).map_err(|e| ApiError::Protocol(e.to_string()))?;
    let report = verify_image(api, &edited, &container)?;
    let (w, h) = map.output_size();

    let mut s = BenignStats {
        images: 1,
        ..Default::default()
    };
    for (g, signed) in scene.glyphs.iter().zip(match_glyphs(&container, &scene.glyphs)) {
        let Some(i) = signed else {
            s.unsigned += 1;
            continue;
        };
        let outcome = &report.face_outcomes[i];
        let vis = visible_fraction(&map.quad(&g.bbox()), w, h);
        if vis >= 1.0 - 1e-9 {
            s.in_frame += 1;
            match outcome.kind {
                FaceOutcomeKind::Verified => s.verified += 1,
                FaceOutcomeKind::VerifiedPartial => s.verified_partial += 1,
                FaceOutcomeKind::Tampered => s.tampered += 1,
                FaceOutcomeKind::Cropped => s.cropped += 1,
            }
            if let Some(sim) = outcome.similarity {
                s.genuine_similarities.push(sim);
            }
        } else if vis > 0.0 {
            s.partial_faces += 1;
            match outcome.kind {
                FaceOutcomeKind::Verified | FaceOutcomeKind::VerifiedPartial => s.partial_verified += 1,
                FaceOutcomeKind::Tampered => s.partial_tampered += 1,
                FaceOutcomeKind::Cropped => {}
            }
        }
    }
    Ok(s)
}

pub fn run_benign(api: &dyn NotaryApi, opts: &BenchOptions) -> Result<BenignStats, ApiError> {
    run_trials(opts.images, opts.parallel, |t| benign_trial(api, opts, t))
        .map(|v| v.into_iter().fold(BenignStats::default(), BenignStats::merge))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AttackStats {
    pub trials: usize,
    /// Attacked faces still fully in frame, which must be flagged.
    pub attacked_faces: usize,
    pub tampered: usize,
    /// Not verified and not tampered, but the report carries a warning.
    pub alerted: usize,
    /// Reported verified: a missed attack.
    pub verified: usize,
    /// Neither flagged nor verified, and no warning at all.
    pub silent: usize,
    /// Attacked faces whose true location left the frame but which were
    /// still reported verified somewhere.
    pub verified_elsewhere: usize,
    pub impostor_similarities: Vec<f64>,
}

impl AttackStats {
    fn merge(mut self, o: Self) -> Self {
        self.trials += o.trials;
        self.attacked_faces += o.attacked_faces;
        self.tampered += o.tampered;
        self.alerted += o.alerted;
        self.verified += o.verified;
        self.silent += o.silent;
        self.verified_elsewhere += o.verified_elsewhere;
        self.impostor_similarities.extend(o.impostor_similarities);
        self
    }

    pub fn rejection_rate(&self) -> f64 {
        ratio(self.attacked_faces - self.verified, self.attacked_faces)
    }

    pub fn tampered_rate(&self) -> f64 {
        ratio(self.tampered, self.attacked_faces)
    }
}

/// Attack a signed scene, then apply a benign edit without rotation, and
/// check how every attacked face that stays in frame is reported.
pub fn attack_trial(
    api: &dyn NotaryApi,
    kind: AttackKind,
    opts: &BenchOptions,
    trial: u64,
) -> Result<AttackStats, ApiError> {
    let mut rng = trial_rng(opts.seed ^ 0xa77a_c4ed, trial);
    let min_faces = if kind == AttackKind::Swap { 2 } else { 1 };
    let k = face_count(&mut rng, opts.faces_per_image, min_faces);
    let scene = corpus::random_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k)
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    let container = sign_scene(api, &scene)?;
    let signed = match_glyphs(&container, &scene.glyphs);
    let boxes: Vec<BBox> = scene.glyphs.iter().map(GlyphFaceSpec::bbox).collect();
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let targets: Vec<usize> = order.into_iter().take(min_faces).collect();
    let spec = AttackSpec {
        kind,
        targets: targets.clone(),
        noise_budget: rng.random_range(0.0..=MAX_NOISE_BUDGET),
        rng_seed: rng.random(),
    };
    let attacked = apply_attack(&scene.image, &boxes, &spec).map_err(|e| ApiError::Protocol(e.to_string()))?;
    let benign = BenignTransformSpec::sample(rng.random(), 0.0);
    let (edited, map) = apply_benign(&attacked.image, &benign).map_err(|e| ApiError::Protocol(e.to_string()))?;
    let report = verify_image(api, &edited, &container)?;
    let (w, h) = map.output_size();

    let mut s = AttackStats {
        trials: 1,
        ..Default::default()
    };
    for &t in &targets {
        let Some(i) = signed[t] else { continue };
        let o = &report.face_outcomes[i];
        if visible_fraction(&map.quad(&boxes[t]), w, h) < 1.0 - 1e-9 {
            if matches!(o.kind, FaceOutcomeKind::Verified | FaceOutcomeKind::VerifiedPartial) {
                s.verified_elsewhere += 1;
            }
            continue;
        }
        s.attacked_faces += 1;
        if let Some(sim) = o.similarity {
            s.impostor_similarities.push(sim);
        }
        match o.kind {
            FaceOutcomeKind::Verified | FaceOutcomeKind::VerifiedPartial => s.verified += 1,
            FaceOutcomeKind::Tampered => s.tampered += 1,
            FaceOutcomeKind::Cropped if !report.warnings.is_empty() => s.alerted += 1,
            FaceOutcomeKind::Cropped => s.silent += 1,
        }
    }
    Ok(s)
}

pub fn run_attack(
    api: &dyn NotaryApi,
    kind: AttackKind,
    opts: &BenchOptions,
) -> Result<AttackStats, ApiError> {
    run_trials(opts.attack_trials, opts.parallel, |t| attack_trial(api, kind, opts, t))
        .map(|v| v.into_iter().fold(AttackStats::default(), AttackStats::merge))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CropStats {
    pub trials: usize,
    pub exact: usize,
    pub mismatches: Vec<(usize, usize)>,
}

/// Crop a banded scene so exactly `m` of its `k` faces fall outside, and
/// compare the reported cropped count with `m`.
pub fn crop_trial(api: &dyn NotaryApi, opts: &BenchOptions, trial: u64) -> Result<(usize, usize), ApiError> {
    let mut rng = trial_rng(opts.seed ^ 0xc409, trial);
    let k = rng.random_range(2..=6usize);
    let m = rng.random_range(1..k);
    let scene = corpus::banded_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k)
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    let container = sign_scene(api, &scene)?;
    let boxes: Vec<BBox> = scene.glyphs.iter().map(GlyphFaceSpec::bbox).collect();
    // Cut in the gap after the m-th face from the left or right.
    let from_left = rng.random_bool(0.5);
    let (a, b) = if from_left {
        (boxes[m - 1].x_max(), boxes[m].x_min())
    } else {
        (boxes[k - m - 1].x_max(), boxes[k - m].x_min())
    };
    let cut = ((a + b) / 2.0).round() as u32;
    let (x0, width) = if from_left {
        (cut, BENCH_WIDTH - cut)
    } else {
        (0, cut)
    };
    let edited = proves_core::imageops::crop(&scene.image, x0, 0, width, BENCH_HEIGHT)
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    let report = verify_image(api, &edited, &container)?;
    let signed_out = match_glyphs(&container, &scene.glyphs)
        .iter()
        .enumerate()
        .filter(|(i, s)| s.is_some() && if from_left { *i < m } else { *i >= k - m })
        .count();
    Ok((signed_out, report.cropped_count))
}

pub fn run_crop(api: &dyn NotaryApi, opts: &BenchOptions) -> Result<CropStats, ApiError> {
    let results = run_trials(opts.crop_trials, opts.parallel, |t| crop_trial(api, opts, t))?;
    let mut s = CropStats::default();
    for (want, got) in results {
        s.trials += 1;
        if want == got {
            s.exact += 1;
        } else {
            s.mismatches.push((want, got));
        }
    }
    Ok(s)
}

fn run_trials<T: Send>(
    n: usize,
    parallel: bool,
    f: impl Fn(u64) -> Result<T, ApiError> + Sync + Send,
) -> Result<Vec<T>, ApiError> {
    if parallel {
        (0..n as u64).into_par_iter().map(f).collect()
    } else {
        (0..n as u64).map(f).collect()
    }
}

/// Ten-bin histogram of similarities in [-1, 1], bins of width 0.2.
pub fn histogram(values: &[f64]) -> [usize; 10] {
    let mut bins = [0; 10];
    for v in values {
        let i = (((v + 1.0) / 0.2).floor() as isize).clamp(0, 9) as usize;
        bins[i] += 1;
    }
    bins
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub benign: BenignStats,
    pub attacks: BTreeMap<&'static str, AttackStats>,
    pub crop: Option<CropStats>,
}

/// Run everything the options ask for.
pub fn run_all(
    api: &dyn NotaryApi,
    opts: &BenchOptions,
    attacks: &[AttackKind],
) -> Result<BenchReport, ApiError> {
    ensure_registered(api)?;
    let mut r = BenchReport {
        benign: run_benign(api, opts)?,
        ..Default::default()
    };
    for &kind in attacks {
        r.attacks.insert(kind.name(), run_attack(api, kind, opts)?);
    }
    if opts.crop_trials > 0 {
        r.crop = Some(run_crop(api, opts)?);
    }
    Ok(r)
}

/// Tab-separated `metric  value` table.
pub fn format_table(r: &BenchReport) -> String {
    let mut out = String::from("metric\tvalue\n");
    let b = &r.benign;
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k}\t{v}");
    };
    row("images", b.images.to_string());
    row("in_frame_faces", b.in_frame.to_string());
    row("verified_pct", pct(ratio(b.verified, b.in_frame)));
    row("verified_partial_pct", pct(ratio(b.verified_partial, b.in_frame)));
    row("verified_total_pct", pct(b.verified_rate()));
    row("fail_to_verify_pct", pct(b.fail_rate()));
    row("cropped_in_frame_pct", pct(ratio(b.cropped, b.in_frame)));
    row("partial_faces", b.partial_faces.to_string());
    row("partial_verified_pct", pct(ratio(b.partial_verified, b.partial_faces)));
    row("unsigned_faces", b.unsigned.to_string());
    for (name, a) in &r.attacks {
        row(&format!("{name}_trials"), a.trials.to_string());
        row(&format!("{name}_attacked_faces"), a.attacked_faces.to_string());
        row(&format!("{name}_rejection_pct"), pct(a.rejection_rate()));
        row(&format!("{name}_tampered_pct"), pct(a.tampered_rate()));
        row(&format!("{name}_silent"), a.silent.to_string());
        row(&format!("{name}_verified_elsewhere"), a.verified_elsewhere.to_string());
    }
    if let Some(c) = &r.crop {
        row("crop_trials", c.trials.to_string());
        row("crop_exact_pct", pct(ratio(c.exact, c.trials)));
    }
    let hist = |v: &[f64]| {
        histogram(v)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    row("genuine_similarity_hist", hist(&b.genuine_similarities));
    let impostors: Vec<f64> = r
        .attacks
        .values()
        .flat_map(|a| a.impostor_similarities.iter().copied())
        .collect();
    row("impostor_similarity_hist", hist(&impostors));
    out
}

/// Parse a table produced by [`format_table`].
pub fn parse_table(text: &str) -> Option<BTreeMap<String, String>> {
    let mut lines = text.lines();
    if lines.next()? != "metric\tvalue" {
        return None;
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split_once('\t').map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect()
}
