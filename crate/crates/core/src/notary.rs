//! The notary: registers devices, issues semantic signatures and verifies
//! edited images against them. Transport-agnostic; the HTTP server and the
//! CLI's local mode both drive this type.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{self, CodecError, SignatureContainer};
use crate::config::Config;
use crate::crypto::{self, KeyError, KeyPair, PublicKey};
use crate::engine::{self, EngineConfig, EngineError};
use crate::imageops::{self, ImageError};
use crate::perception::Perception;
use crate::registry::{RegistryError, SharedRegistry, TrustRegistry};
use crate::types::{
    FaceRecord, FaceOutcomeKind, ImageBuffer, SceneLabel, SceneOutcome, SemanticPayload,
    Timestamp, VerificationReport, MIN_FACE_AREA_FRACTION,
};

pub const NOTARY_KEY_FILE: &str = "notary.key";
pub const REGISTRY_LOG_FILE: &str = "registry.log";

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp(chrono::Utc::now().timestamp().max(0) as u64)
    }
}

/// Settable clock for tests.
#[derive(Debug, Default)]
pub struct FixedClock(AtomicU64);

impl FixedClock {
    pub fn new(t: Timestamp) -> Self {
        Self(AtomicU64::new(t.0))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t.0, Ordering::SeqCst);
    }
}

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Error)]
pub enum NotaryError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("device {0:?} is not registered")]
    UnknownDevice(String),
    #[error("device {0:?} is already registered")]
    DuplicateDevice(String),
    #[error("device {0:?} has been revoked")]
    RevokedDevice(String),
    #[error("device signature does not match the submitted pixels")]
    DeviceSignatureInvalid,
    #[error("notary signature does not verify")]
    SignatureInvalid,
    #[error("no semantic signature found")]
    NoSignature,
    #[error("malformed signature container: {0}")]
    MalformedContainer(String),
    #[error("self-check failed: {0}")]
    SelfCheckFailed(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<ImageError> for NotaryError {
    fn from(e: ImageError) -> Self {
        NotaryError::BadRequest(e.to_string())
    }
}

impl From<CodecError> for NotaryError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::NoSignature => NotaryError::NoSignature,
            CodecError::Io(e) => NotaryError::Internal(e.to_string()),
            other => NotaryError::MalformedContainer(other.to_string()),
        }
    }
}

impl From<RegistryError> for NotaryError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::DuplicateDevice(d) => NotaryError::DuplicateDevice(d),
            RegistryError::UnknownDevice(d) => NotaryError::UnknownDevice(d),
            RegistryError::InvalidDeviceId(d) => {
                NotaryError::BadRequest(format!("invalid device id {d:?}"))
            }
            other => NotaryError::Internal(other.to_string()),
        }
    }
}

impl From<EngineError> for NotaryError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::SignatureInvalid => NotaryError::SignatureInvalid,
            other => NotaryError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SignRequest {
    pub device_id: String,
    /// PNG bytes of the image to sign.
    pub image: Vec<u8>,
    /// Device's DER signature over sha256 of the raw RGB8 pixels.
    pub device_signature: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SignResponse {
    pub container: SignatureContainer,
    pub self_check: bool,
}

/// Bytes a device signs: the decoded RGB8 pixels, row-major.
pub fn device_message(image: &ImageBuffer) -> &[u8] {
    image.pixels()
}

pub fn device_sign(key: &KeyPair, image: &ImageBuffer) -> Vec<u8> {
    crypto::sign(key, device_message(image))
}

pub struct Notary {
    key: KeyPair,
    registry: SharedRegistry,
    perception: Perception,
    config: EngineConfig,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Notary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Notary")
            .field("public_key", &self.key.public_key())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Notary {
    pub fn new(
        key: KeyPair,
        registry: SharedRegistry,
        perception: Perception,
        config: EngineConfig,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            key,
            registry,
            perception,
            config,
            clock,
        }
    }

    /// In-memory notary with a fresh registry.
    pub fn ephemeral(key: KeyPair, config: &Config, clock: Arc<dyn Clock>) -> Self {
        Self::new(
            key,
            SharedRegistry::in_memory(TrustRegistry::new()),
            config.perception(),
            config.engine.clone(),
            clock,
        )
    }

    /// Notary persisted in `dir`: the key is generated on first use and the
    /// registry log replayed on every start.
    pub fn open(dir: &Path, config: &Config, clock: Arc<dyn Clock>) -> Result<Self, NotaryError> {
        let io = |e: std::io::Error| NotaryError::Internal(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let key_path = dir.join(NOTARY_KEY_FILE);
        let key = match std::fs::read_to_string(&key_path) {
            Ok(text) => load_secret_hex(text.trim())
                .map_err(|e| NotaryError::Internal(format!("{}: {e}", key_path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let key = KeyPair::generate(&mut rand::rng());
                write_secret_hex(&key_path, &key).map_err(io)?;
                key
            }
            Err(e) => return Err(io(e)),
        };
        let registry = SharedRegistry::open(&dir.join(REGISTRY_LOG_FILE))?;
        Ok(Self::new(
            key,
            registry,
            config.perception(),
            config.engine.clone(),
            clock,
        ))
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn perception(&self) -> &Perception {
        &self.perception
    }

    pub fn registry(&self) -> &SharedRegistry {
        &self.registry
    }

    pub fn register(&self, device_id: &str, public_key: &[u8]) -> Result<(), NotaryError> {
        let key = PublicKey::from_sec1_bytes(public_key)
            .map_err(|e| NotaryError::BadRequest(e.to_string()))?;
        Ok(self.registry.register_device(device_id, key)?)
    }

    pub fn revoke(&self, device_id: &str, effective: Timestamp) -> Result<Timestamp, NotaryError> {
        Ok(self.registry.revoke_device(device_id, effective)?)
    }

    /// Semantic signing.
    ///
    /// The device and its signature over the pixels are checked first; a
    /// device with any revocation on record is refused. The registry read
    /// lock is held from that check until the timestamp is taken, so a
    /// concurrent revocation cannot slip in between.
    pub fn sign(&self, request: &SignRequest) -> Result<SignResponse, NotaryError> {
        let image = imageops::decode_png(&request.image)?;
        let signed_at = {
            let registry = self.registry.read();
            let entry = registry.lookup(&request.device_id)?;
            if entry.revoked_effective.is_some() {
                return Err(NotaryError::RevokedDevice(request.device_id.clone()));
            }
            if !crypto::verify(
                &entry.public_key,
                device_message(&image),
                &request.device_signature,
            ) {
                return Err(NotaryError::DeviceSignatureInvalid);
            }
            self.clock.now()
        };
        let payload = self.extract_payload(&image, &request.device_id, signed_at)?;
        let payload_bytes = codec::canonical_payload_bytes(&payload)
            .map_err(|e| NotaryError::Internal(e.to_string()))?;
        let signature = crypto::sign(&self.key, &payload_bytes);
        let container = SignatureContainer::new(payload_bytes, signature)
            .map_err(|e| NotaryError::Internal(e.to_string()))?;
        self.self_check(&image, &container)?;
        Ok(SignResponse {
            container,
            self_check: true,
        })
    }

    /// Detect, filter, embed and classify: everything that goes into a
    /// payload.
    pub fn extract_payload(
        &self,
        image: &ImageBuffer,
        device_id: &str,
        signed_at: Timestamp,
    ) -> Result<SemanticPayload, NotaryError> {
        let min_area = MIN_FACE_AREA_FRACTION * image.area();
        let mut faces: Vec<FaceRecord> = self
            .perception
            .detector
            .detect(image)
            .into_iter()
            .filter(|b| b.area() >= min_area && b.visible_area(image.width() as f64, image.height() as f64) > 0.0)
            .filter_map(|bbox| {
                let feature = self.perception.embedder.embed(image, &bbox).ok()?;
                Some(FaceRecord { bbox, feature })
            })
            .collect();
        SemanticPayload::sort_faces(&mut faces);
        let q = self.perception.scene.indoor_probability(image);
        let scene = if q >= 0.5 {
            SceneLabel::Indoor
        } else {
            SceneLabel::Outdoor
        };
        let payload = SemanticPayload {
            image_width: image.width(),
            image_height: image.height(),
            faces,
            scene,
            device_id: device_id.to_owned(),
            signed_at,
        };
        payload
            .validate()
            .map_err(|e| NotaryError::BadRequest(e.to_string()))?;
        Ok(payload)
    }

    fn self_check(
        &self,
        image: &ImageBuffer,
        container: &SignatureContainer,
    ) -> Result<(), NotaryError> {
        let reparsed = container
            .to_bytes()
            .and_then(|b| SignatureContainer::from_bytes(&b))
            .map_err(|e| NotaryError::SelfCheckFailed(e.to_string()))?;
        let report = self
            .verify_decoded(image, &reparsed)
            .map_err(|e| NotaryError::SelfCheckFailed(e.to_string()))?;
        if !report.all_faces_verified() {
            let bad = report
                .face_outcomes
                .iter()
                .filter(|o| o.kind != FaceOutcomeKind::Verified)
                .count();
            return Err(NotaryError::SelfCheckFailed(format!(
                "{bad} face(s) did not verify on the untouched image"
            )));
        }
        if report.scene_outcome == Some(SceneOutcome::Failed) {
            return Err(NotaryError::SelfCheckFailed(
                "scene label contradicts the untouched image".into(),
            ));
        }
        Ok(())
    }

    /// Verify an encoded image. The container comes from `container` if
    /// given, else from the image's own metadata.
    pub fn verify(
        &self,
        image_file: &[u8],
        container: Option<&[u8]>,
    ) -> Result<VerificationReport, NotaryError> {
        let container = match container {
            Some(bytes) => SignatureContainer::from_bytes(bytes)?,
            None => codec::extract_signature(image_file)?,
        };
        let image = imageops::decode_png(image_file)?;
        self.verify_decoded(&image, &container)
    }

    pub fn verify_decoded(
        &self,
        image: &ImageBuffer,
        container: &SignatureContainer,
    ) -> Result<VerificationReport, NotaryError> {
        let registry = self.registry.read();
        Ok(engine::verify_image(
            image,
            container,
            &self.key.public_key(),
            &registry,
            &self.perception,
            &self.config,
        )?)
    }
}

fn load_secret_hex(text: &str) -> Result<KeyPair, KeyError> {
    if text.len() != 64 || !text.is_ascii() {
        return Err(KeyError::MalformedPrivateKey);
    }
    let bytes: Result<Vec<u8>, _> = (0..32)
        .map(|i| u8::from_str_radix(&text[2 * i..2 * i + 2], 16))
        .collect();
    KeyPair::from_secret_bytes(&bytes.map_err(|_| KeyError::MalformedPrivateKey)?)
}

fn write_secret_hex(path: &Path, key: &KeyPair) -> std::io::Result<()> {
    let hex: String = key.secret_bytes().iter().map(|b| format!("{b:02x}")).collect();
    std::fs::write(path, hex + "\n")
}

/// Read a hex-encoded private key as written by [`save_key`].
pub fn load_key(path: &Path) -> Result<KeyPair, NotaryError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NotaryError::BadRequest(format!("{}: {e}", path.display())))?;
    load_secret_hex(text.trim()).map_err(|e| NotaryError::BadRequest(e.to_string()))
}

pub fn save_key(path: &Path, key: &KeyPair) -> std::io::Result<()> {
    write_secret_hex(path, key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{render_scene, GlyphFaceSpec};

    fn setup() -> (Notary, KeyPair, Arc<FixedClock>) {
        let clock = Arc::new(FixedClock::new(Timestamp(1_700_000_000)));
        let notary = Notary::ephemeral(KeyPair::from_seed(1), &Config::default(), clock.clone());
        let device = KeyPair::from_seed(2);
        notary
            .register("cam", &device.public_key().to_sec1_bytes())
            .unwrap();
        (notary, device, clock)
    }

    fn scene() -> ImageBuffer {
        let glyphs = [
            GlyphFaceSpec::new(1, (60.0, 60.0), 40.0),
            GlyphFaceSpec::new(2, (160.0, 70.0), 36.0),
            GlyphFaceSpec::new(3, (110.0, 150.0), 44.0),
        ];
        render_scene(240, 200, SceneLabel::Indoor, &glyphs, 5).unwrap()
    }

    fn request(device: &KeyPair, image: &ImageBuffer) -> SignRequest {
        SignRequest {
            device_id: "cam".into(),
            image: imageops::encode_png(image).unwrap(),
            device_signature: device_sign(device, image),
        }
    }

    #[test]
    fn sign_then_verify_untouched() {
        let (notary, device, clock) = setup();
        let img = scene();
        let resp = notary.sign(&request(&device, &img)).unwrap();
        assert!(resp.self_check);
        assert_eq!(resp.container.payload().faces.len(), 3);
        assert_eq!(resp.container.payload().signed_at, clock.now());
        let report = notary.verify_decoded(&img, &resp.container).unwrap();
        assert!(report.all_faces_verified());
        assert_eq!(report.scene_outcome, Some(SceneOutcome::Verified));
    }

    #[test]
    fn sign_rejections() {
        let (notary, device, _) = setup();
        let img = scene();
        let mut req = request(&device, &img);
        req.device_signature = device_sign(&device, &render_scene(10, 10, SceneLabel::Indoor, &[], 0).unwrap());
        assert!(matches!(notary.sign(&req), Err(NotaryError::DeviceSignatureInvalid)));
        let mut req = request(&device, &img);
        req.device_id = "ghost".into();
        assert!(matches!(notary.sign(&req), Err(NotaryError::UnknownDevice(_))));
        notary.revoke("cam", Timestamp(2_000_000_000)).unwrap();
        assert!(matches!(
            notary.sign(&request(&device, &img)),
            Err(NotaryError::RevokedDevice(_))
        ));
    }

    #[test]
    fn register_errors() {
        let (notary, device, _) = setup();
        let pk = device.public_key().to_sec1_bytes();
        assert!(matches!(notary.register("cam", &pk), Err(NotaryError::DuplicateDevice(_))));
        assert!(matches!(notary.register("x", &pk[..20]), Err(NotaryError::BadRequest(_))));
        assert!(matches!(
            notary.revoke("nobody", Timestamp(0)),
            Err(NotaryError::UnknownDevice(_))
        ));
    }

    #[test]
    fn persisted_key_and_registry_survive_restart() {
        let dir = tempfile::tempdir().unwrap();
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let a = Notary::open(dir.path(), &Config::default(), clock.clone()).unwrap();
        a.register("cam", &KeyPair::from_seed(3).public_key().to_sec1_bytes())
            .unwrap();
        let pk = a.public_key();
        drop(a);
        let b = Notary::open(dir.path(), &Config::default(), clock).unwrap();
        assert_eq!(b.public_key(), pk);
        assert!(b.registry().read().lookup("cam").is_ok());
    }
}
