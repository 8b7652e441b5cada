//! Blocking HTTP client for the notary.

use std::time::Duration;

use proves_core::notary::{SignRequest, SignResponse};
use proves_core::{PublicKey, Timestamp, VerificationReport};

use crate::api::{self, ApiError, NotaryApi};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8471";

#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    agent: ureq::Agent,
}

impl HttpClient {
    /// `addr` is `host:port` or a full `http://` URL.
    pub fn new(addr: &str) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_owned()
        } else {
            format!("http://{addr}")
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Self { base, agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post(&self, path: &str, body: Vec<u8>) -> Result<(u16, Vec<u8>), ApiError> {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/octet-stream")
            .send(&body[..])
            .map_err(|e| ApiError::Network(e.to_string()))?;
        read(resp)
    }

    fn expect(&self, path: &str, body: Vec<u8>, success: u16) -> Result<Vec<u8>, ApiError> {
        let (code, bytes) = self.post(path, body)?;
        if code == success {
            Ok(bytes)
        } else {
            Err(ApiError::Status {
                code,
                message: String::from_utf8_lossy(&bytes).into_owned(),
            })
        }
    }

    pub fn notary_key(&self) -> Result<PublicKey, ApiError> {
        let resp = self
            .agent
            .get(format!("{}/v1/key", self.base))
            .call()
            .map_err(|e| ApiError::Network(e.to_string()))?;
        let (code, bytes) = read(resp)?;
        if code != 200 {
            return Err(ApiError::Status {
                code,
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        PublicKey::from_sec1_bytes(&bytes).map_err(|e| ApiError::Protocol(e.to_string()))
    }
}

fn read(mut resp: ureq::http::Response<ureq::Body>) -> Result<(u16, Vec<u8>), ApiError> {
    let code = resp.status().as_u16();
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(crate::http::MAX_BODY as u64)
        .read_to_vec()
        .map_err(|e| ApiError::Network(e.to_string()))?;
    Ok((code, bytes))
}

impl NotaryApi for HttpClient {
    fn register(&self, device_id: &str, public_key: &[u8]) -> Result<(), ApiError> {
        self.expect("/v1/register", api::encode_register(device_id, public_key)?, 201)
            .map(|_| ())
    }

    fn sign(&self, request: &SignRequest) -> Result<SignResponse, ApiError> {
        let b = self.expect("/v1/sign", api::encode_sign_request(request)?, 200)?;
        api::decode_sign_response(&b)
    }

    fn verify(&self, image: &[u8], container: Option<&[u8]>) -> Result<VerificationReport, ApiError> {
        let b = self.expect("/v1/verify", api::encode_verify_request(image, container)?, 200)?;
        api::decode_report(&b)
    }

    fn revoke(&self, device_id: &str, effective: Timestamp) -> Result<Timestamp, ApiError> {
        let b = self.expect("/v1/revoke", api::encode_revoke(device_id, effective)?, 200)?;
        api::decode_effective(&b)
    }
}
