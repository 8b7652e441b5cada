//! The notary operations as one trait, so callers can switch between the
//! in-process notary and the HTTP client without changing behaviour.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use thiserror::Error;

use proves_core::notary::{SignRequest, SignResponse};
use proves_core::wire::{decode_parts, encode_parts, Metadata, WireError};
use proves_core::{Notary, NotaryError, SignatureContainer, Timestamp, VerificationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApiError {
    /// The notary answered with a non-success status.
    #[error("notary returned {code}: {message}")]
    Status { code: u16, message: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl ApiError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ApiError::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        ApiError::Protocol(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Register,
    Sign,
    Verify,
    Revoke,
}

/// HTTP status for a notary failure during `op`.
pub fn status_for(op: Operation, e: &NotaryError) -> u16 {
    match e {
        NotaryError::BadRequest(_) | NotaryError::MalformedContainer(_) => 400,
        NotaryError::UnknownDevice(_) if op == Operation::Revoke => 404,
        NotaryError::UnknownDevice(_) => 401,
        NotaryError::RevokedDevice(_) => 403,
        NotaryError::NoSignature => 404,
        NotaryError::DuplicateDevice(_) => 409,
        NotaryError::DeviceSignatureInvalid | NotaryError::SignatureInvalid => 422,
        NotaryError::SelfCheckFailed(_) | NotaryError::Internal(_) => 500,
    }
}

fn api_error(op: Operation, e: NotaryError) -> ApiError {
    ApiError::Status {
        code: status_for(op, &e),
        message: e.to_string(),
    }
}

pub trait NotaryApi: Send + Sync {
    fn register(&self, device_id: &str, public_key: &[u8]) -> Result<(), ApiError>;
    fn sign(&self, request: &SignRequest) -> Result<SignResponse, ApiError>;
    /// `image` is an encoded PNG; `container` overrides any embedded one.
    fn verify(&self, image: &[u8], container: Option<&[u8]>) -> Result<VerificationReport, ApiError>;
    fn revoke(&self, device_id: &str, effective: Timestamp) -> Result<Timestamp, ApiError>;
}

impl NotaryApi for Notary {
    fn register(&self, device_id: &str, public_key: &[u8]) -> Result<(), ApiError> {
        Notary::register(self, device_id, public_key).map_err(|e| api_error(Operation::Register, e))
    }

    fn sign(&self, request: &SignRequest) -> Result<SignResponse, ApiError> {
        Notary::sign(self, request).map_err(|e| api_error(Operation::Sign, e))
    }

    fn verify(&self, image: &[u8], container: Option<&[u8]>) -> Result<VerificationReport, ApiError> {
        Notary::verify(self, image, container).map_err(|e| api_error(Operation::Verify, e))
    }

    fn revoke(&self, device_id: &str, effective: Timestamp) -> Result<Timestamp, ApiError> {
        Notary::revoke(self, device_id, effective).map_err(|e| api_error(Operation::Revoke, e))
    }
}

// Request and response bodies. Every body is a part list whose first part
// is a metadata record.

fn bad(msg: impl Into<String>) -> NotaryError {
    NotaryError::BadRequest(msg.into())
}

fn b64(meta: &Metadata, key: &str) -> Result<Vec<u8>, NotaryError> {
    let v = meta.require(key).map_err(|e| bad(e.to_string()))?;
    B64.decode(v).map_err(|_| bad(format!("{key} is not valid base64")))
}

fn split(body: &[u8], min_parts: usize) -> Result<(Metadata, Vec<Vec<u8>>), NotaryError> {
    let mut parts = decode_parts(body).map_err(|e| bad(e.to_string()))?;
    if parts.len() < min_parts.max(1) {
        return Err(bad(format!("expected at least {} parts", min_parts.max(1))));
    }
    let meta = Metadata::from_bytes(&parts.remove(0)).map_err(|e| bad(e.to_string()))?;
    Ok((meta, parts))
}

fn body(meta: Metadata, rest: Vec<Vec<u8>>) -> Result<Vec<u8>, WireError> {
    let mut parts = vec![meta.to_bytes()?];
    parts.extend(rest);
    encode_parts(&parts)
}

pub fn encode_register(device_id: &str, public_key: &[u8]) -> Result<Vec<u8>, WireError> {
    let meta = Metadata::new()
        .with("device_id", device_id)
        .with("public_key", B64.encode(public_key));
    body(meta, vec![])
}

pub fn decode_register(b: &[u8]) -> Result<(String, Vec<u8>), NotaryError> {
    let (meta, _) = split(b, 1)?;
    let id = meta.require("device_id").map_err(|e| bad(e.to_string()))?.to_owned();
    Ok((id, b64(&meta, "public_key")?))
}

pub fn encode_sign_request(r: &SignRequest) -> Result<Vec<u8>, WireError> {
    let meta = Metadata::new()
        .with("device_id", r.device_id.as_str())
        .with("device_signature", B64.encode(&r.device_signature));
    body(meta, vec![r.image.clone()])
}

pub fn decode_sign_request(b: &[u8]) -> Result<SignRequest, NotaryError> {
    let (meta, mut rest) = split(b, 2)?;
    Ok(SignRequest {
        device_id: meta.require("device_id").map_err(|e| bad(e.to_string()))?.to_owned(),
        device_signature: b64(&meta, "device_signature")?,
        image: rest.remove(0),
    })
}

pub fn encode_sign_response(r: &SignResponse) -> Result<Vec<u8>, WireError> {
    let container = r
        .container
        .to_bytes()
        .map_err(|e| WireError::Metadata(e.to_string()))?;
    body(
        Metadata::new().with("self_check", r.self_check.to_string()),
        vec![container],
    )
}

pub fn decode_sign_response(b: &[u8]) -> Result<SignResponse, ApiError> {
    let (meta, rest) = split(b, 2).map_err(|e| ApiError::Protocol(e.to_string()))?;
    let container = SignatureContainer::from_bytes(&rest[0])
        .map_err(|e| ApiError::Protocol(e.to_string()))?;
    Ok(SignResponse {
        container,
        self_check: meta.get("self_check") == Some("true"),
    })
}

pub fn encode_verify_request(image: &[u8], container: Option<&[u8]>) -> Result<Vec<u8>, WireError> {
    let mut rest = vec![image.to_vec()];
    rest.extend(container.map(<[u8]>::to_vec));
    body(Metadata::new(), rest)
}

pub fn decode_verify_request(b: &[u8]) -> Result<(Vec<u8>, Option<Vec<u8>>), NotaryError> {
    let (_, mut rest) = split(b, 2)?;
    let image = rest.remove(0);
    Ok((image, rest.into_iter().next()))
}

pub fn encode_report(r: &VerificationReport) -> Result<Vec<u8>, WireError> {
    let json = serde_json::to_vec(r).map_err(|e| WireError::Metadata(e.to_string()))?;
    body(Metadata::new().with("format", "json"), vec![json])
}

pub fn decode_report(b: &[u8]) -> Result<VerificationReport, ApiError> {
    let (_, rest) = split(b, 2).map_err(|e| ApiError::Protocol(e.to_string()))?;
    serde_json::from_slice(&rest[0]).map_err(|e| ApiError::Protocol(e.to_string()))
}

pub fn encode_revoke(device_id: &str, effective: Timestamp) -> Result<Vec<u8>, WireError> {
    let meta = Metadata::new()
        .with("device_id", device_id)
        .with("effective", effective.to_rfc3339());
    body(meta, vec![])
}

pub fn decode_revoke(b: &[u8]) -> Result<(String, Timestamp), NotaryError> {
    let (meta, _) = split(b, 1)?;
    let id = meta.require("device_id").map_err(|e| bad(e.to_string()))?.to_owned();
    let raw = meta.require("effective").map_err(|e| bad(e.to_string()))?;
    let t = Timestamp::parse_rfc3339(raw).ok_or_else(|| bad(format!("bad timestamp {raw:?}")))?;
    Ok((id, t))
}

pub fn encode_effective(effective: Timestamp) -> Result<Vec<u8>, WireError> {
    body(Metadata::new().with("effective", effective.to_rfc3339()), vec![])
}

pub fn decode_effective(b: &[u8]) -> Result<Timestamp, ApiError> {
    let (meta, _) = split(b, 1).map_err(|e| ApiError::Protocol(e.to_string()))?;
    meta.get("effective")
        .and_then(Timestamp::parse_rfc3339)
        .ok_or_else(|| ApiError::Protocol("missing effective date".into()))
}
