//! The `proves` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use clap::{Args, Parser, Subcommand};

use proves_core::codec::{self, Carrier, CodecError};
use proves_core::imageops::{decode_png, encode_png};
use proves_core::notary::{device_sign, load_key, save_key, SignRequest};
use proves_core::{
    BBox, Clock, Config, FixedClock, KeyPair, Notary, RevocationStatus, SceneOutcome,
    SystemClock, Timestamp, VerificationReport,
};
use proves_server::{ApiError, HttpClient, NotaryApi};

use crate::annotate::annotate;
use crate::bench::{self, BenchOptions};
use crate::transform::{self, AttackKind, AttackSpec, BenignTransformSpec};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const TAMPERED: u8 = 1;
    pub const NETWORK: u8 = 2;
    pub const REJECTED: u8 = 3;
    pub const SELF_CHECK: u8 = 4;
    pub const UNSUPPORTED_FORMAT: u8 = 5;
    pub const REFUSED: u8 = 6;
    pub const SCENE_FAILED: u8 = 7;
    pub const NO_SIGNATURE: u8 = 8;
    /// Local failures: unreadable files, bad arguments.
    pub const USAGE: u8 = 64;
}

#[derive(Debug, Parser)]
#[command(name = "proves", version, about = "Sign and verify the semantic content of images")]
pub struct Cli {
    /// Notary address, host:port or URL.
    #[arg(long, global = true, env = "PROVES_ADDR", default_value = proves_server::DEFAULT_ADDR)]
    pub addr: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a device key pair.
    Keygen {
        /// Where to write the private key (hex).
        #[arg(long)]
        out: PathBuf,
        /// Derive the key from a seed instead of the OS generator.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register a device's public key with the notary.
    Register {
        #[arg(long)]
        device: String,
        #[arg(long)]
        key: PathBuf,
    },
    /// Have the notary sign an image and attach the signature.
    Sign(SignArgs),
    /// Verify an image against its attached signature.
    Verify(VerifyArgs),
    /// Apply a benign edit or an attack to an image, keeping its signature.
    Transform(TransformArgs),
    /// Run the benign, attack and crop experiments and print a table.
    Bench(BenchArgs),
    /// Render a synthetic glyph scene to a PNG.
    Scene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        faces: usize,
        #[arg(long, default_value_t = 384)]
        width: u32,
        #[arg(long, default_value_t = 288)]
        height: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Revoke a device from a given date.
    Revoke {
        #[arg(long)]
        device: String,
        /// Effective date, e.g. 2024-05-01T00:00:00Z.
        #[arg(long)]
        effective: String,
    },
}

#[derive(Debug, Args)]
pub struct SignArgs {
    pub image: PathBuf,
    #[arg(long)]
    pub device: String,
    #[arg(long)]
    pub key: PathBuf,
    /// Write the signature to `<out>.provsig` instead of a PNG chunk.
    #[arg(long)]
    pub sidecar: bool,
    /// Output path; defaults to rewriting the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub image: PathBuf,
    /// Write the image with result boxes and the cropped count drawn on.
    #[arg(long)]
    pub annotate: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `random[:SEED[:MAX_ROTATION]]` or comma-separated `scale=,tx=,ty=,
    /// rotate=,contrast=,brightness=,color=` (unset keys are neutral).
    #[arg(long, conflicts_with = "attack", required_unless_present = "attack")]
    pub benign: Option<String>,
    /// `kind=replace|swap|remove|occlude|crop-out,targets=I[+J],noise=EPS,seed=N`;
    /// targets index the detected faces in signing order.
    #[arg(long)]
    pub attack: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 500)]
    pub images: usize,
    /// Faces per image; random in 1..=10 when omitted.
    #[arg(long)]
    pub faces_per_image: Option<usize>,
    /// Maximum rotation in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub rotation: f64,
    /// Trials per attack kind.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 200)]
    pub crop_trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run the notary in-process instead of over HTTP.
    #[arg(long)]
    pub local: bool,
    /// Run trials one at a time.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::new(exit::USAGE, e.to_string())
}

fn api_failure(e: ApiError) -> Failure {
    let code = match &e {
        ApiError::Network(_) | ApiError::Protocol(_) => exit::NETWORK,
        ApiError::Status { code: 404, .. } => exit::NO_SIGNATURE,
        ApiError::Status { code: 500, message } if message.contains("self-check") => {
            exit::SELF_CHECK
        }
        ApiError::Status { code: 500, .. } => exit::NETWORK,
        ApiError::Status { .. } => exit::REJECTED,
    };
    Failure::new(code, e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: &Cli) -> Result<u8, Failure> {
    let client = || HttpClient::new(&cli.addr);
    match &cli.command {
        Command::Keygen { out, seed } => {
            let key = match seed {
                Some(s) => KeyPair::from_seed(*s),
                None => KeyPair::generate(&mut rand::rng()),
            };
            save_key(out, &key).map_err(usage)?;
            println!("{}", B64.encode(key.public_key().to_sec1_bytes()));
            Ok(exit::OK)
        }
        Command::Register { device, key } => {
            let key = load_key(key).map_err(usage)?;
            client()
                .register(device, &key.public_key().to_sec1_bytes())
                .map_err(api_failure)?;
            println!("registered {device}");
            Ok(exit::OK)
        }
        Command::Sign(args) => sign(&client(), args),
        Command::Verify(args) => verify(&client(), args),
        Command::Transform(args) => transform_cmd(args),
        Command::Bench(args) => bench_cmd(cli, args),
        Command::Scene { out, faces, width, height, seed } => {
            let scene = crate::corpus::random_scene(&mut bench::trial_rng(*seed, 0), *width, *height, *faces)
                .map_err(usage)?;
            write(out, &encode_png(&scene.image).map_err(usage)?)?;
            println!("{} face(s), {}", scene.glyphs.len(), scene.label);
            Ok(exit::OK)
        }
        Command::Revoke { device, effective } => {
            let t = Timestamp::parse_rfc3339(effective)
                .ok_or_else(|| usage(format!("bad date {effective:?}")))?;
            let t = client().revoke(device, t).map_err(api_failure)?;
            println!("revoked {device} effective {t}");
            Ok(exit::OK)
        }
    }
}

pub fn sign(api: &dyn NotaryApi, args: &SignArgs) -> Result<u8, Failure> {
    let bytes = read(&args.image)?;
    if !codec::is_png(&bytes) && !args.sidecar {
        return Err(Failure::new(
            exit::UNSUPPORTED_FORMAT,
            format!("{} is not a PNG; use --sidecar", args.image.display()),
        ));
    }
    let key = load_key(&args.key).map_err(usage)?;
    let image = decode_png(&bytes)
        .map_err(|e| Failure::new(exit::UNSUPPORTED_FORMAT, e.to_string()))?;
    let response = api
        .sign(&SignRequest {
            device_id: args.device.clone(),
            image: bytes.clone(),
            device_signature: device_sign(&key, &image),
        })
        .map_err(api_failure)?;
    if !response.self_check {
        return Err(Failure::new(exit::SELF_CHECK, "notary did not confirm its self-check"));
    }
    let out = args.out.clone().unwrap_or_else(|| args.image.clone());
    let (file, carrier) = codec::embed_signature(&bytes, &response.container, args.sidecar)
        .map_err(|e| usage(e.to_string()))?;
    write(&out, &file)?;
    if carrier == Carrier::Sidecar {
        codec::write_sidecar(&out, &response.container).map_err(usage)?;
    }
    println!(
        "signed {} face(s), scene {}, at {}",
        response.container.payload().faces.len(),
        response.container.payload().scene,
        response.container.payload().signed_at
    );
    Ok(exit::OK)
}

/// Exit code a report maps to: refusal first, then tampering, then scene.
pub fn report_exit_code(report: &VerificationReport) -> u8 {
    if report.revocation_status == RevocationStatus::Refused {
        exit::REFUSED
    } else if report.any_tampered() {
        exit::TAMPERED
    } else if report.scene_outcome == Some(SceneOutcome::Failed) {
        exit::SCENE_FAILED
    } else {
        exit::OK
    }
}

pub fn format_report(report: &VerificationReport) -> String {
    let mut s = String::new();
    for (i, o) in report.face_outcomes.iter().enumerate() {
        let sim = o.similarity.map(|v| format!(" similarity {v:.3}")).unwrap_or_default();
        let at = o
            .bbox_in_current
            .map(|b| {
                let [x0, y0, x1, y1] = b.corners();
                format!(" at [{x0:.1}, {y0:.1}, {x1:.1}, {y1:.1}]")
            })
            .unwrap_or_default();
        s += &format!("face {i}: {:?}{sim}{at}\n", o.kind);
    }
    s += &format!("cropped: {}\n", report.cropped_count);
    for b in &report.unmatched_new_faces {
        let [x0, y0, x1, y1] = b.corners();
        s += &format!("new face at [{x0:.1}, {y0:.1}, {x1:.1}, {y1:.1}]\n");
    }
    if let Some(scene) = report.scene_outcome {
        s += &format!("scene: {scene:?}\n");
    }
    s += &format!("source: {:?}\n", report.revocation_status);
    for w in &report.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

pub fn verify(api: &dyn NotaryApi, args: &VerifyArgs) -> Result<u8, Failure> {
    let bytes = read(&args.image)?;
    let container = match codec::extract_signature_from_path(&args.image) {
        Ok(c) => c,
        Err(CodecError::NoSignature) => {
            return Err(Failure::new(exit::NO_SIGNATURE, "no semantic signature found"))
        }
        Err(e) => return Err(Failure::new(exit::REJECTED, e.to_string())),
    };
    if !codec::is_png(&bytes) {
        return Err(Failure::new(exit::UNSUPPORTED_FORMAT, "only PNG images can be verified"));
    }
    let container_bytes = container.to_bytes().map_err(usage)?;
    let report = api
        .verify(&bytes, Some(&container_bytes))
        .map_err(api_failure)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(usage)?);
    } else {
        print!("{}", format_report(&report));
    }
    if let Some(path) = &args.annotate {
        let image = decode_png(&bytes).map_err(usage)?;
        write(path, &encode_png(&annotate(&image, &report)).map_err(usage)?)?;
    }
    if report.face_outcomes.is_empty() && report.revocation_status != RevocationStatus::Refused {
        eprintln!("note: the signature lists no faces");
    }
    Ok(report_exit_code(&report))
}

pub fn parse_benign(spec: &str) -> Result<BenignTransformSpec, String> {
    if let Some(rest) = spec.strip_prefix("random") {
        let mut parts = rest.trim_start_matches(':').split(':').filter(|s| !s.is_empty());
        let seed = parts.next().map(str::parse).transpose().map_err(|_| "bad seed")?;
        let rot = parts.next().map(str::parse).transpose().map_err(|_| "bad rotation")?;
        return Ok(BenignTransformSpec::sample(seed.unwrap_or(0), rot.unwrap_or(5.0)));
    }
    let mut s = BenignTransformSpec::IDENTITY;
    for item in spec.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or(format!("expected key=value, got {item:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("bad number in {item:?}"))?;
        match k.trim() {
            "scale" => s.scale = v,
            "tx" => s.translate_x = v,
            "ty" => s.translate_y = v,
            "rotate" => s.rotate = v,
            "contrast" => s.contrast = v,
            "brightness" => s.brightness = v,
            "color" => s.color = v,
            other => return Err(format!("unknown benign key {other:?}")),
        }
    }
    Ok(s)
}

pub fn parse_attack(spec: &str) -> Result<AttackSpec, String> {
    let mut a = AttackSpec {
        kind: AttackKind::Replace,
        targets: vec![0],
        noise_budget: 0.0,
        rng_seed: 0,
    };
    let mut kind = None;
    for item in spec.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or(format!("expected key=value, got {item:?}"))?;
        let v = v.trim();
        match k.trim() {
            "kind" => kind = Some(<AttackKind as clap::ValueEnum>::from_str(v, true)?),
            "targets" => {
                a.targets = v
                    .split('+')
                    .map(|t| t.parse().map_err(|_| format!("bad target {t:?}")))
                    .collect::<Result<_, _>>()?
            }
            "noise" => a.noise_budget = v.parse().map_err(|_| "bad noise")?,
            "seed" => a.rng_seed = v.parse().map_err(|_| "bad seed")?,
            other => return Err(format!("unknown attack key {other:?}")),
        }
    }
    a.kind = kind.ok_or("attack kind is required")?;
    Ok(a)
}

/// Detected faces in signing order.
fn detected_faces(image: &proves_core::ImageBuffer) -> Vec<BBox> {
    let mut boxes = proves_core::perception::reference_detect(image);
    boxes.sort_by(|a, b| {
        (a.y_min(), a.x_min(), a.x_max())
            .partial_cmp(&(b.y_min(), b.x_min(), b.x_max()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    boxes
}

pub fn transform_cmd(args: &TransformArgs) -> Result<u8, Failure> {
    let image = decode_png(&read(&args.image)?)
        .map_err(|e| Failure::new(exit::UNSUPPORTED_FORMAT, e.to_string()))?;
    let out = if let Some(b) = &args.benign {
        let spec = parse_benign(b).map_err(usage)?;
        transform::apply_benign(&image, &spec).map_err(usage)?.0
    } else {
        let spec = parse_attack(args.attack.as_deref().unwrap_or_default()).map_err(usage)?;
        let faces = detected_faces(&image);
        transform::apply_attack(&image, &faces, &spec).map_err(usage)?.image
    };
    // Carry the signature over, as a metadata-preserving editor would.
    let mut png = encode_png(&out).map_err(usage)?;
    if let Ok(container) = codec::extract_signature_from_path(&args.image) {
        png = codec::embed_png(&png, &container).map_err(usage)?;
    }
    write(&args.out, &png)?;
    Ok(exit::OK)
}

pub fn bench_cmd(cli: &Cli, args: &BenchArgs) -> Result<u8, Failure> {
    let opts = BenchOptions {
        images: args.images,
        faces_per_image: args.faces_per_image,
        max_rotation: args.rotation,
        attack_trials: args.trials,
        crop_trials: args.crop_trials,
        seed: args.seed,
        parallel: !args.serial,
    };
    let attacks = [AttackKind::Replace, AttackKind::Swap, AttackKind::Remove];
    let report = if args.local {
        let clock = Arc::new(FixedClock::new(Clock::now(&SystemClock)));
        let notary = Notary::ephemeral(KeyPair::from_seed(args.seed), &Config::default(), clock);
        bench::run_all(&notary, &opts, &attacks)
    } else {
        bench::run_all(&HttpClient::new(&cli.addr), &opts, &attacks)
    }
    .map_err(api_failure)?;
    print!("{}", bench::format_table(&report));
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benign_spec_parsing() {
        assert_eq!(parse_benign("").unwrap(), BenignTransformSpec::IDENTITY);
        let s = parse_benign("scale=1.1,tx=-0.05,rotate=3").unwrap();
        assert_eq!((s.scale, s.translate_x, s.rotate), (1.1, -0.05, 3.0));
        assert_eq!(parse_benign("random:7").unwrap(), BenignTransformSpec::sample(7, 5.0));
        assert_eq!(parse_benign("random:7:0").unwrap().rotate, 0.0);
        assert!(parse_benign("zoom=2").is_err());
    }

    #[test]
    fn attack_spec_parsing() {
        let a = parse_attack("kind=swap,targets=0+2,noise=3,seed=9").unwrap();
        assert_eq!(a.kind, AttackKind::Swap);
        assert_eq!(a.targets, vec![0, 2]);
        assert_eq!((a.noise_budget, a.rng_seed), (3.0, 9));
        assert_eq!(parse_attack("kind=crop-out").unwrap().kind, AttackKind::CropOut);
        assert!(parse_attack("targets=1").is_err());
        assert!(parse_attack("kind=melt").is_err());
    }

    #[test]
    fn api_errors_map_to_exit_codes() {
        let st = |code: u16, m: &str| ApiError::Status { code, message: m.into() };
        assert_eq!(api_failure(ApiError::Network("x".into())).code, exit::NETWORK);
        assert_eq!(api_failure(st(401, "")).code, exit::REJECTED);
        assert_eq!(api_failure(st(403, "")).code, exit::REJECTED);
        assert_eq!(api_failure(st(422, "")).code, exit::REJECTED);
        assert_eq!(api_failure(st(404, "")).code, exit::NO_SIGNATURE);
        assert_eq!(api_failure(st(500, "self-check failed: x")).code, exit::SELF_CHECK);
    }
}
