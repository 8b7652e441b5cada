//! Bit-exact payload encoding and the carriers that attach it to image files.
//!
//! Payload layout, all integers big-endian:
//!
//! ```text
//! u32 width | u32 height | u8 scene | u64 signed_at
//! u16 device_id length | device_id UTF-8
//! u16 face count
//! per face: f64 x_min, y_min, x_max, y_max | u16 D | D x f64
//! ```
//!
//! A container wraps the payload and the notary's DER signature:
//!
//! ```text
//! "PROVSIG1" | u16 version | u32 payload length | payload | u16 sig length | sig
//! ```

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

use crate::types::{
    BBox, FaceRecord, FeatureVector, SceneLabel, SemanticPayload, Timestamp, TypeError,
};

pub const CONTAINER_MAGIC: &[u8; 8] = b"PROVSIG1";
pub const CONTAINER_VERSION: u16 = 1;
pub const PNG_TEXT_KEY: &str = "provsig";
pub const SIDECAR_EXTENSION: &str = "provsig";

const PNG_SIGNATURE: [u8; 8] = [137, 80, 78, 71, 13, 10, 26, 10];

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{0} does not fit its length field")]
    FieldOverflow(&'static str),
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-canonical encoding: {0}")]
    NonCanonical(&'static str),
    #[error("invalid payload: {0}")]
    InvalidPayload(#[from] TypeError),
    #[error("malformed signature container: {0}")]
    MalformedContainer(String),
    #[error("no semantic signature found")]
    NoSignature,
    #[error("unsupported image format (only PNG can carry an embedded signature)")]
    UnsupportedFormat,
    #[error("malformed PNG: {0}")]
    MalformedPng(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical bytes of a payload; the notary signs exactly these.
pub fn encode_payload(payload: &SemanticPayload) -> Result<Vec<u8>, CodecError> {
    let device = payload.device_id.as_bytes();
    let device_len =
        u16::try_from(device.len()).map_err(|_| CodecError::FieldOverflow("device id"))?;
    let face_count =
        u16::try_from(payload.faces.len()).map_err(|_| CodecError::FieldOverflow("face count"))?;

    let mut out = Vec::with_capacity(
        23 + device.len()
            + payload
                .faces
                .iter()
                .map(|f| 34 + 8 * f.feature.dimension())
                .sum::<usize>(),
    );
    out.extend_from_slice(&payload.image_width.to_be_bytes());
    out.extend_from_slice(&payload.image_height.to_be_bytes());
    out.push(payload.scene.code());
    out.extend_from_slice(&payload.signed_at.0.to_be_bytes());
    out.extend_from_slice(&device_len.to_be_bytes());
    out.extend_from_slice(device);
    out.extend_from_slice(&face_count.to_be_bytes());
    for face in &payload.faces {
        for v in face.bbox.corners() {
            out.extend_from_slice(&v.to_be_bytes());
        }
        let dim = u16::try_from(face.feature.dimension())
            .map_err(|_| CodecError::FieldOverflow("feature dimension"))?;
        out.extend_from_slice(&dim.to_be_bytes());
        for v in face.feature.components() {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

/// Alias kept for callers that think in terms of "what gets signed".
pub fn canonical_payload_bytes(payload: &SemanticPayload) -> Result<Vec<u8>, CodecError> {
    encode_payload(payload)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CodecError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        let bits = self.u64()?;
        // -0.0 would alias +0.0 after decoding.
        if bits == 1 << 63 {
            return Err(CodecError::NonCanonical("negative zero"));
        }
        Ok(f64::from_bits(bits))
    }

    fn finish(&self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

/// Strict inverse of [`encode_payload`]: rejects truncation, trailing bytes,
/// non-canonical floats and payloads that break their invariants.
pub fn decode_payload(bytes: &[u8]) -> Result<SemanticPayload, CodecError> {
    let mut r = Reader::new(bytes);
    let image_width = r.u32()?;
    let image_height = r.u32()?;
    let scene = SceneLabel::from_code(r.u8()?).ok_or(CodecError::NonCanonical("scene code"))?;
    let signed_at = Timestamp(r.u64()?);
    let device_len = r.u16()? as usize;
    let device_id = std::str::from_utf8(r.take(device_len)?)
        .map_err(|_| CodecError::NonCanonical("device id is not UTF-8"))?
        .to_owned();
    let face_count = r.u16()? as usize;
    let mut faces = Vec::with_capacity(face_count.min(1024));
    for _ in 0..face_count {
        let bbox = BBox::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
        let dim = r.u16()? as usize;
        let mut components = Vec::with_capacity(dim);
        for _ in 0..dim {
            components.push(r.f64()?);
        }
        faces.push(FaceRecord {
            bbox,
            feature: FeatureVector::new(components)?,
        });
    }
    r.finish()?;
    let payload = SemanticPayload {
        image_width,
        image_height,
        faces,
        scene,
        device_id,
        signed_at,
    };
    payload.validate()?;
    Ok(payload)
}

/// Signed payload as it travels with an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureContainer {
    payload_bytes: Vec<u8>,
    signature_bytes: Vec<u8>,
    payload: SemanticPayload,
}

impl SignatureContainer {
    /// Build from raw parts; the payload bytes must decode.
    pub fn new(payload_bytes: Vec<u8>, signature_bytes: Vec<u8>) -> Result<Self, CodecError> {
        let payload = decode_payload(&payload_bytes)
            .map_err(|e| CodecError::MalformedContainer(format!("payload: {e}")))?;
        Ok(Self {
            payload_bytes,
            signature_bytes,
            payload,
        })
    }

    pub fn payload_bytes(&self) -> &[u8] {
        &self.payload_bytes
    }

    pub fn signature_bytes(&self) -> &[u8] {
        &self.signature_bytes
    }

    /// Decoded payload. Not authenticated until the engine checks the signature.
    pub fn payload(&self) -> &SemanticPayload {
        &self.payload
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let plen = u32::try_from(self.payload_bytes.len())
            .map_err(|_| CodecError::FieldOverflow("payload"))?;
        let slen = u16::try_from(self.signature_bytes.len())
            .map_err(|_| CodecError::FieldOverflow("signature"))?;
        let mut out =
            Vec::with_capacity(16 + self.payload_bytes.len() + self.signature_bytes.len());
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_be_bytes());
        out.extend_from_slice(&plen.to_be_bytes());
        out.extend_from_slice(&self.payload_bytes);
        out.extend_from_slice(&slen.to_be_bytes());
        out.extend_from_slice(&self.signature_bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let malformed = |what: &str| CodecError::MalformedContainer(what.to_owned());
        let mut r = Reader::new(bytes);
        let magic: [u8; 8] = r.array().map_err(|_| malformed("truncated magic"))?;
        if &magic != CONTAINER_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = r.u16().map_err(|_| malformed("truncated version"))?;
        if version != CONTAINER_VERSION {
            return Err(CodecError::MalformedContainer(format!(
                "unsupported version {version}"
            )));
        }
        let plen = r.u32().map_err(|_| malformed("truncated length"))? as usize;
        let payload = r.take(plen).map_err(|_| malformed("truncated payload"))?;
        let slen = r.u16().map_err(|_| malformed("truncated length"))? as usize;
        let sig = r.take(slen).map_err(|_| malformed("truncated signature"))?;
        r.finish().map_err(|_| malformed("trailing bytes"))?;
        Self::new(payload.to_vec(), sig.to_vec())
    }
}

pub fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(&PNG_SIGNATURE)
}

struct Chunk<'a> {
    kind: [u8; 4],
    data: &'a [u8],
    /// Byte range of the whole chunk (length, type, data, CRC).
    span: std::ops::Range<usize>,
}

fn png_chunks(bytes: &[u8]) -> Result<Vec<Chunk<'_>>, CodecError> {
    if !is_png(bytes) {
        return Err(CodecError::UnsupportedFormat);
    }
    let bad = |m: &str| CodecError::MalformedPng(m.to_owned());
    let mut chunks = Vec::new();
    let mut pos = PNG_SIGNATURE.len();
    loop {
        let header = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated chunk header"))?;
        let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
        let kind: [u8; 4] = header[4..8].try_into().unwrap();
        let data_end = (pos + 8).checked_add(len).ok_or_else(|| bad("chunk length"))?;
        let end = data_end + 4;
        if end > bytes.len() {
            return Err(bad("truncated chunk"));
        }
        let crc = u32::from_be_bytes(bytes[data_end..end].try_into().unwrap());
        if crc != crc32fast::hash(&bytes[pos + 4..data_end]) {
            return Err(CodecError::MalformedPng(format!(
                "CRC mismatch in {} chunk",
                String::from_utf8_lossy(&kind)
            )));
        }
        chunks.push(Chunk {
            kind,
            data: &bytes[pos + 8..data_end],
            span: pos..end,
        });
        pos = end;
        if &kind == b"IEND" {
            return Ok(chunks);
        }
    }
}

fn is_signature_chunk(chunk: &Chunk<'_>) -> bool {
    &chunk.kind == b"tEXt"
        && chunk.data.len() > PNG_TEXT_KEY.len()
        && chunk.data.starts_with(PNG_TEXT_KEY.as_bytes())
        && chunk.data[PNG_TEXT_KEY.len()] == 0
}

fn write_chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    let start = out.len();
    out.extend_from_slice(kind);
    out.extend_from_slice(data);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_be_bytes());
}

/// Store the container in a `tEXt` chunk keyed `provsig`, placed right
/// before `IEND`. Any previous signature chunk is replaced; every other
/// chunk is copied through untouched.
pub fn embed_png(png: &[u8], container: &SignatureContainer) -> Result<Vec<u8>, CodecError> {
    let chunks = png_chunks(png)?;
    let mut text = Vec::new();
    text.extend_from_slice(PNG_TEXT_KEY.as_bytes());
    text.push(0);
    text.extend_from_slice(BASE64.encode(container.to_bytes()?).as_bytes());

    let mut out = Vec::with_capacity(png.len() + text.len() + 12);
    out.extend_from_slice(&PNG_SIGNATURE);
    for chunk in &chunks {
        if is_signature_chunk(chunk) {
            continue;
        }
        if &chunk.kind == b"IEND" {
            write_chunk(&mut out, b"tEXt", &text);
        }
        out.extend_from_slice(&png[chunk.span.clone()]);
    }
    Ok(out)
}

pub fn extract_png(png: &[u8]) -> Result<SignatureContainer, CodecError> {
    let chunks = png_chunks(png)?;
    let chunk = chunks
        .iter()
        .find(|c| is_signature_chunk(c))
        .ok_or(CodecError::NoSignature)?;
    let encoded = &chunk.data[PNG_TEXT_KEY.len() + 1..];
    let raw = BASE64
        .decode(encoded)
        .map_err(|e| CodecError::MalformedContainer(format!("base64: {e}")))?;
    SignatureContainer::from_bytes(&raw)
}

/// Drop the signature chunk, leaving every other byte as it was.
pub fn strip_png(png: &[u8]) -> Result<Vec<u8>, CodecError> {
    let chunks = png_chunks(png)?;
    let mut out = PNG_SIGNATURE.to_vec();
    for chunk in chunks.iter().filter(|c| !is_signature_chunk(c)) {
        out.extend_from_slice(&png[chunk.span.clone()]);
    }
    Ok(out)
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".");
    s.push(SIDECAR_EXTENSION);
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Png,
    Sidecar,
}

/// Attach a container to an image file in memory. PNG inputs get the chunk;
/// anything else needs sidecar mode, in which case the image bytes come back
/// unchanged and the caller writes the sidecar.
pub fn embed_signature(
    image_file: &[u8],
    container: &SignatureContainer,
    sidecar: bool,
) -> Result<(Vec<u8>, Carrier), CodecError> {
    if sidecar {
        return Ok((image_file.to_vec(), Carrier::Sidecar));
    }
    if !is_png(image_file) {
        return Err(CodecError::UnsupportedFormat);
    }
    Ok((embed_png(image_file, container)?, Carrier::Png))
}

pub fn write_sidecar(image: &Path, container: &SignatureContainer) -> Result<PathBuf, CodecError> {
    let path = sidecar_path(image);
    std::fs::write(&path, container.to_bytes()?)?;
    Ok(path)
}

pub fn read_sidecar(image: &Path) -> Result<SignatureContainer, CodecError> {
    match std::fs::read(sidecar_path(image)) {
        Ok(bytes) => SignatureContainer::from_bytes(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CodecError::NoSignature),
        Err(e) => Err(e.into()),
    }
}

/// Signature from the image bytes themselves (PNG chunk), if any.
pub fn extract_signature(image_file: &[u8]) -> Result<SignatureContainer, CodecError> {
    if !is_png(image_file) {
        return Err(CodecError::NoSignature);
    }
    extract_png(image_file)
}

/// Embedded chunk first, then `<path>.provsig`.
pub fn extract_signature_from_path(image: &Path) -> Result<SignatureContainer, CodecError> {
    let bytes = std::fs::read(image)?;
    match extract_signature(&bytes) {
        Err(CodecError::NoSignature) => read_sidecar(image),
        other => other,
    }
}
