//! SHA-256 digests and ECDSA (P-256) signatures.
//!
//! Signing hashes the message with SHA-256 and derives the nonce
//! deterministically (RFC 6979), so equal inputs give equal signatures.

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("malformed public key")]
    MalformedPublicKey,
    #[error("malformed private key")]
    MalformedPrivateKey,
}

pub fn sha256_digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", hex_prefix(&self.to_sec1_bytes()))
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl PublicKey {
    /// Uncompressed SEC1 point (65 bytes).
    pub fn to_sec1_bytes(&self) -> Vec<u8> {
        self.0.to_encoded_point(false).as_bytes().to_vec()
    }

    pub fn from_sec1_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        VerifyingKey::from_sec1_bytes(bytes)
            .map(Self)
            .map_err(|_| KeyError::MalformedPublicKey)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public_key())
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut bytes = [0u8; 32];
            rng.fill_bytes(&mut bytes);
            if let Ok(kp) = Self::from_secret_bytes(&bytes) {
                return kp;
            }
        }
    }

    /// Deterministic key for tests and fixtures; never use for real devices.
    pub fn from_seed(seed: u64) -> Self {
        let mut material = seed.to_be_bytes().to_vec();
        loop {
            let digest = sha256_digest(&material);
            if let Ok(kp) = Self::from_secret_bytes(&digest) {
                return kp;
            }
            material = digest.to_vec();
        }
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        SigningKey::from_slice(bytes)
            .map(|signing| Self { signing })
            .map_err(|_| KeyError::MalformedPrivateKey)
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes().into()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(*self.signing.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        sign(self, message)
    }
}

/// DER-encoded ECDSA signature over `sha256(message)`.
pub fn sign(key: &KeyPair, message: &[u8]) -> Vec<u8> {
    let sig: Signature = key.signing.sign(message);
    sig.to_der().as_bytes().to_vec()
}

/// Malformed signature bytes verify as `false`.
pub fn verify(key: &PublicKey, message: &[u8], signature: &[u8]) -> bool {
    match Signature::from_der(signature) {
        Ok(sig) => key.0.verify(message, &sig).is_ok(),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn sha256_published_vectors() {
        assert_eq!(
            hex(&sha256_digest(b"")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hex(&sha256_digest(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sign_verify_contract() {
        let kp = KeyPair::from_seed(1);
        let other = KeyPair::from_seed(2);
        let msg = b"semantic payload";
        let sig = kp.sign(msg);
        assert!(verify(&kp.public_key(), msg, &sig));
        let mut flipped = msg.to_vec();
        flipped[3] ^= 0x10;
        assert!(!verify(&kp.public_key(), &flipped, &sig));
        assert!(!verify(&other.public_key(), msg, &sig));
        assert!(!verify(&kp.public_key(), msg, b"\x30\x02garbage"));
        assert!(!verify(&kp.public_key(), msg, &[]));
    }

    #[test]
    fn signatures_are_deterministic() {
        let kp = KeyPair::from_seed(7);
        assert_eq!(kp.sign(b"x"), kp.sign(b"x"));
        assert_ne!(kp.sign(b"x"), kp.sign(b"y"));
    }

    #[test]
    fn key_encodings_round_trip() {
        let kp = KeyPair::from_seed(3);
        let pk = kp.public_key();
        let sec1 = pk.to_sec1_bytes();
        assert_eq!(sec1.len(), 65);
        assert_eq!(PublicKey::from_sec1_bytes(&sec1).unwrap(), pk);
        assert_eq!(
            PublicKey::from_sec1_bytes(&sec1[..40]),
            Err(KeyError::MalformedPublicKey)
        );
        let again = KeyPair::from_secret_bytes(&kp.secret_bytes()).unwrap();
        assert_eq!(again.public_key(), pk);
        assert!(KeyPair::from_secret_bytes(&[0u8; 32]).is_err());
    }
}
