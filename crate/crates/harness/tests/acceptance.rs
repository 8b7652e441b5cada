//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use proves_core::codec::{decode_payload, embed_png, encode_payload, extract_png, SignatureContainer};
use proves_core::crypto::{sign, verify};
use proves_core::engine::{fit_similarity_transform, scene_outcome, TransformParams};
use proves_core::imageops::{decode_png, encode_png};
use proves_core::notary::{device_sign, SignRequest};
use proves_core::perception::{render_scene, GlyphFaceSpec};
use proves_core::{
    BBox, Config, FaceOutcomeKind, FaceRecord, FeatureVector, FixedClock, KeyPair, Notary,
    RevocationStatus, SceneLabel, SceneOutcome, SemanticPayload, Timestamp,
};
use proves_harness::bench::{self, BenchOptions};
use proves_harness::corpus::{random_scene, BENCH_HEIGHT, BENCH_WIDTH};
use proves_harness::transform::AttackKind;
use proves_server::{HttpClient, NotaryApi, ServerHandle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T0: Timestamp = Timestamp(1_700_000_000);

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Local notary with the bench device registered.
fn notary() -> Notary {
    let n = Notary::ephemeral(KeyPair::from_seed(1), &Config::default(), Arc::new(FixedClock::new(T0)));
    bench::ensure_registered(&n).unwrap();
    n
}

fn opts() -> BenchOptions {
    BenchOptions {
        images: 500,
        faces_per_image: None,
        max_rotation: 0.0,
        attack_trials: 500,
        crop_trials: 200,
        seed: 2024,
        parallel: false,
    }
}

fn hex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn transform_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(64.0..2048.0), rng.random_range(64.0..2048.0));
        let s = rng.random_range(0.85..=1.15);
        let alpha = rng.random_range(-0.15..=0.15) * w;
        let beta = rng.random_range(-0.15..=0.15) * h;
        let truth = TransformParams::new(s, alpha, beta).unwrap();
        let n = rng.random_range(2..=10);
        let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n);
        while centers.len() < n {
            let c = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            if centers.iter().all(|p| (p.0 - c.0).hypot(p.1 - c.1) > 1.0) {
                centers.push(c);
            }
        }
        let pairs: Vec<_> = centers.iter().map(|&c| (c, truth.apply_point(c))).collect();
        let fit = fit_similarity_transform(&pairs, 2).map_err(|e| e.to_string())?.params;
        // Translations are judged relative to the image dimension they are
        // drawn against, so a near-zero offset is not held to 1e-9 of itself.
        worst = worst
            .max((fit.s - s).abs() / s)
            .max((fit.alpha - alpha).abs() / w)
            .max((fit.beta - beta).abs() / h);
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("worst relative error {worst:.2e}, {elapsed:?} for 1000 fits"),
    )
}

fn crypto_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut round_trips, mut rejected, mut deterministic) = (0, 0, 0);
    for i in 0..1000u64 {
        let key = KeyPair::from_seed(i);
        let len = rng.random_range(1..512);
        let msg: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let sig = sign(&key, &msg);
        round_trips += verify(&key.public_key(), &msg, &sig) as usize;
        deterministic += (sign(&KeyPair::from_seed(i), &msg) == sig) as usize;
        let mut m = msg.clone();
        let bit = rng.random_range(0..m.len() * 8);
        m[bit / 8] ^= 1 << (bit % 8);
        rejected += !verify(&key.public_key(), &m, &sig) as usize;
    }
    check(
        round_trips == 1000 && rejected == 1000 && deterministic == 1000,
        format!("{round_trips}/1000 verified, {rejected}/1000 mutations rejected, {deterministic}/1000 deterministic"),
    )
}

const GOLDEN_EMPTY: &str = "00000064000000640000000000000000000001640000";
const GOLDEN_ONE_FACE: &str = "00000280000001e001000000006553f100000663616d2d30310001\
    402400000000000040340000000000004049000000000000404e0000000000000002\
    3fe3333333333333bfe999999999999a";
const GOLDEN_CONTAINER: &str = "50524f565349473100010000004d\
    00000280000001e001000000006553f100000663616d2d30310001\
    402400000000000040340000000000004049000000000000404e0000000000000002\
    3fe3333333333333bfe999999999999a\
    0048304602210081f657361a81acc8c28328d420c26ccd61993cf93306f95e6af1c271bdc1c4dc\
    0221008659325ff10d30047b1d5e300910e657bc6926719a0780d805802becaf2b96e3";

fn codec_golden() -> Outcome {
    let empty = SemanticPayload {
        image_width: 100,
        image_height: 100,
        faces: vec![],
        scene: SceneLabel::Indoor,
        device_id: "d".into(),
        signed_at: Timestamp(0),
    };
    let one = SemanticPayload {
        image_width: 640,
        image_height: 480,
        faces: vec![FaceRecord {
            bbox: BBox::new(10.0, 20.0, 50.0, 60.0).unwrap(),
            feature: FeatureVector::new(vec![0.6, -0.8]).unwrap(),
        }],
        scene: SceneLabel::Outdoor,
        device_id: "cam-01".into(),
        signed_at: T0,
    };
    let mut errors = Vec::new();
    for (name, p, g) in [("empty", &empty, GOLDEN_EMPTY), ("one-face", &one, GOLDEN_ONE_FACE)] {
        let g = hex(g);
        if decode_payload(&g).ok().as_ref() != Some(p) || encode_payload(p).unwrap() != g {
            errors.push(format!("{name} payload vector"));
        }
    }
    let golden = hex(GOLDEN_CONTAINER);
    let key = KeyPair::from_seed(1).public_key();
    match SignatureContainer::from_bytes(&golden) {
        Ok(c) if c.payload() == &one && verify(&key, c.payload_bytes(), c.signature_bytes()) => {}
        _ => errors.push("container vector".into()),
    }
    let fresh = SignatureContainer::new(encode_payload(&one).unwrap(), sign(&KeyPair::from_seed(1), &encode_payload(&one).unwrap()));
    if fresh.and_then(|c| c.to_bytes()).ok() != Some(golden.clone()) {
        errors.push("container re-encoding".into());
    }

    // Every single-byte change, at every position, must break decoding or
    // the signature.
    let mut mutations = 0;
    for i in 0..golden.len() {
        for delta in [0x01u8, 0x80, 0xff] {
            let mut m = golden.clone();
            m[i] = m[i].wrapping_add(delta);
            mutations += 1;
            if let Ok(c) = SignatureContainer::from_bytes(&m) {
                if verify(&key, c.payload_bytes(), c.signature_bytes()) {
                    errors.push(format!("mutation at byte {i} accepted"));
                }
            }
        }
    }

    let glyphs = [GlyphFaceSpec::new(3, (60.0, 60.0), 40.0)];
    let img = render_scene(160, 120, SceneLabel::Indoor, &glyphs, 1).unwrap();
    let png = encode_png(&img).unwrap();
    let container = SignatureContainer::from_bytes(&golden).unwrap();
    let embedded = embed_png(&png, &container).unwrap();
    if decode_png(&embedded).unwrap().pixels() != img.pixels() {
        errors.push("PNG embed changed pixels".into());
    }
    if extract_png(&embedded).ok().as_ref() != Some(&container) {
        errors.push("PNG chunk did not round-trip".into());
    }
    check(
        errors.is_empty(),
        if errors.is_empty() {
            format!("3 golden vectors match, {mutations} container mutations rejected, PNG pixels preserved")
        } else {
            errors.join("; ")
        },
    )
}

fn benign_suite() -> Outcome {
    let n = notary();
    let start = Instant::now();
    let flat = bench::run_benign(&n, &opts()).map_err(|e| e.to_string())?;
    let rotated = bench::run_benign(&n, &BenchOptions { max_rotation: 5.0, ..opts() }).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let pct = |x: f64| 100.0 * x;
    check(
        flat.verified_rate() >= 0.99
            && flat.fail_rate() <= 0.01
            && rotated.fail_rate() <= 0.02
            && elapsed < Duration::from_secs(300),
        format!(
            "rotation 0: {:.2}% verified, {:.2}% fail of {} faces; rotation 5: {:.2}% verified, {:.2}% fail of {} faces; \
             {} unsigned glyphs; {:.1}s single-threaded",
            pct(flat.verified_rate()),
            pct(flat.fail_rate()),
            flat.in_frame,
            pct(rotated.verified_rate()),
            pct(rotated.fail_rate()),
            rotated.in_frame,
            flat.unsigned + rotated.unsigned,
            elapsed.as_secs_f64()
        ),
    )
}

fn attack_rejection() -> Outcome {
    let n = notary();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [AttackKind::Replace, AttackKind::Swap, AttackKind::Remove] {
        let s = bench::run_attack(&n, kind, &opts()).map_err(|e| e.to_string())?;
        let needs_tampered = kind != AttackKind::Remove;
        ok &= s.trials == 500
            && s.attacked_faces > 0
            && s.verified == 0
            && s.verified_elsewhere == 0
            && s.silent == 0
            && (!needs_tampered || s.tampered_rate() >= 0.99);
        parts.push(format!(
            "{}: {} faces, {} verified (+{} out of frame), {:.2}% tampered, {} alerts, {} silent",
            kind.name(),
            s.attacked_faces,
            s.verified,
            s.verified_elsewhere,
            100.0 * s.tampered_rate(),
            s.alerted,
            s.silent
        ));
    }
    check(ok, parts.join("; "))
}

fn crop_accounting() -> Outcome {
    let s = bench::run_crop(&notary(), &opts()).map_err(|e| e.to_string())?;
    check(
        s.trials == 200 && s.exact == 200,
        format!("{}/{} exact, mismatches (expected, reported): {:?}", s.exact, s.trials, s.mismatches),
    )
}

fn scene_rule() -> Outcome {
    let mut mismatches = Vec::new();
    let mut low_band = [0usize; 4];
    // q = i/20 and gamma = g/10, so the rule reduces to integer comparisons.
    for (gi, g) in [5i32, 6, 7, 9].into_iter().enumerate() {
        for i in 0..=20i32 {
            for z in [SceneLabel::Indoor, SceneLabel::Outdoor] {
                let predicted = if i >= 2 * g {
                    Some(SceneLabel::Indoor)
                } else if 20 - i > 2 * g {
                    Some(SceneLabel::Outdoor)
                } else {
                    None
                };
                let want = match predicted {
                    Some(p) if p == z => SceneOutcome::Verified,
                    Some(_) => SceneOutcome::Failed,
                    None => SceneOutcome::LowConfidence,
                };
                let got = scene_outcome(i as f64 / 20.0, z, g as f64 / 10.0);
                if got != want {
                    mismatches.push(format!("q={}/20 gamma=0.{g} z={z}: {got:?} != {want:?}", i));
                }
                if got == SceneOutcome::LowConfidence && z == SceneLabel::Indoor {
                    low_band[gi] += 1;
                }
            }
        }
    }
    let band_ok = low_band[0] == 0 && low_band[1..].iter().all(|&n| n > 0);
    check(
        mismatches.is_empty() && band_ok,
        if mismatches.is_empty() {
            format!("168 grid points match; LowConfidence q-points per gamma 0.5/0.6/0.7/0.9: {low_band:?}")
        } else {
            mismatches.join("; ")
        },
    )
}

fn revocation_boundary() -> Outcome {
    let glyphs = [GlyphFaceSpec::new(5, (80.0, 60.0), 40.0)];
    let img = render_scene(200, 150, SceneLabel::Indoor, &glyphs, 2).unwrap();
    let device = KeyPair::from_seed(9);
    let mut errors = Vec::new();
    let cases = [
        ("unrevoked", None, RevocationStatus::Trusted),
        ("effective before signing", Some(T0.0 - 1), RevocationStatus::Refused),
        ("effective at signing", Some(T0.0), RevocationStatus::SignedBeforeRevocation),
        ("effective after signing", Some(T0.0 + 1), RevocationStatus::SignedBeforeRevocation),
    ];
    for (name, effective, want) in cases {
        let clock = Arc::new(FixedClock::new(T0));
        let n = Notary::ephemeral(KeyPair::from_seed(1), &Config::default(), clock.clone());
        n.register("cam", &device.public_key().to_sec1_bytes()).unwrap();
        let signed = n
            .sign(&SignRequest {
                device_id: "cam".into(),
                image: encode_png(&img).unwrap(),
                device_signature: device_sign(&device, &img),
            })
            .unwrap();
        clock.set(Timestamp(T0.0 + 3600));
        if let Some(t) = effective {
            n.revoke("cam", Timestamp(t)).unwrap();
        }
        let png = embed_png(&encode_png(&img).unwrap(), &signed.container).unwrap();
        let r = n.verify(&png, None).unwrap();
        let warned = !r.warnings.is_empty();
        let warning_ok = match want {
            RevocationStatus::Trusted => !warned,
            _ => warned,
        };
        if r.revocation_status != want || !warning_ok {
            errors.push(format!("{name}: {:?}, warnings {:?}", r.revocation_status, r.warnings));
        }
    }
    check(
        errors.is_empty(),
        if errors.is_empty() {
            "after -> Refused, at/before -> SignedBeforeRevocation with warning, unrevoked -> Trusted".into()
        } else {
            errors.join("; ")
        },
    )
}

fn service_identity() -> Outcome {
    let n = Arc::new(notary());
    let server = ServerHandle::spawn(n.clone(), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let client = HttpClient::new(&server.base_url());
    let (mut all_verified, mut identical, mut faces) = (0, 0, 0);
    for trial in 0..100u64 {
        let mut rng = bench::trial_rng(99, trial);
        let k = rng.random_range(1..=10);
        let scene = random_scene(&mut rng, BENCH_WIDTH, BENCH_HEIGHT, k).map_err(|e| e.to_string())?;
        let container = bench::sign_scene(&client, &scene).map_err(|e| e.to_string())?;
        let png = embed_png(&encode_png(&scene.image).unwrap(), &container).unwrap();
        let remote = client.verify(&png, None).map_err(|e| e.to_string())?;
        let local = n.verify(&png, None).map_err(|e| e.to_string())?;
        faces += remote.face_outcomes.len();
        if !remote.face_outcomes.is_empty()
            && remote.face_outcomes.iter().all(|o| o.kind == FaceOutcomeKind::Verified)
            && remote.scene_outcome == Some(SceneOutcome::Verified)
        {
            all_verified += 1;
        }
        identical += (remote == local) as usize;
    }
    check(
        all_verified == 100 && identical == 100,
        format!("{all_verified}/100 all-Verified over HTTP ({faces} faces), {identical}/100 identical to local"),
    )
}

fn performance() -> Outcome {
    let n = notary();
    let device = bench::bench_device();
    let glyphs: Vec<GlyphFaceSpec> = (0..10)
        .map(|i| GlyphFaceSpec::new(i, (150.0 + 180.0 * (i % 5) as f64, 250.0 + 450.0 * (i / 5) as f64), 96.0))
        .collect();
    let img = render_scene(1024, 1024, SceneLabel::Outdoor, &glyphs, 7).unwrap();
    let signed = n
        .sign(&SignRequest {
            device_id: bench::BENCH_DEVICE.into(),
            image: encode_png(&img).unwrap(),
            device_signature: device_sign(&device, &img),
        })
        .map_err(|e| e.to_string())?;
    let png = embed_png(&encode_png(&img).unwrap(), &signed.container).unwrap();
    let mut worst = Duration::ZERO;
    let mut verified = true;
    for _ in 0..5 {
        let start = Instant::now();
        let r = n.verify(&png, None).map_err(|e| e.to_string())?;
        worst = worst.max(start.elapsed());
        verified &= r.face_outcomes.len() == 10 && r.all_faces_verified();
    }
    check(
        worst < Duration::from_millis(250) && verified,
        format!("slowest of 5 verifies {worst:?} (PNG decode included), 10 faces verified: {verified}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("transform fit", transform_fit),
        ("crypto suite", crypto_suite),
        ("codec golden vectors", codec_golden),
        ("benign suite", benign_suite),
        ("attack rejection", attack_rejection),
        ("crop accounting", crop_accounting),
        ("scene rule", scene_rule),
        ("revocation boundary", revocation_boundary),
        ("service identity", service_identity),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
