//! Trusted device keys with revocation dates, backed by an append-only log.
//!
//! Log format, one record per line, tab-separated:
//!
//! ```text
//! REG <device_id> <base64 SEC1 public key>
//! REV <device_id> <ISO-8601 effective date>
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::crypto::PublicKey;
use crate::types::{validate_device_id, RevocationStatus, Timestamp};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("device {0:?} is already registered")]
    DuplicateDevice(String),
    #[error("device {0:?} is not registered")]
    UnknownDevice(String),
    #[error("invalid device id {0:?}")]
    InvalidDeviceId(String),
    #[error("registry log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub device_id: String,
    pub public_key: PublicKey,
    pub revoked_effective: Option<Timestamp>,
}

#[derive(Debug, Clone, Default)]
pub struct TrustRegistry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl TrustRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn register_device(
        &mut self,
        device_id: &str,
        public_key: PublicKey,
    ) -> Result<(), RegistryError> {
        validate_device_id(device_id)
            .map_err(|_| RegistryError::InvalidDeviceId(device_id.to_owned()))?;
        if self.entries.contains_key(device_id) {
            return Err(RegistryError::DuplicateDevice(device_id.to_owned()));
        }
        self.entries.insert(
            device_id.to_owned(),
            RegistryEntry {
                device_id: device_id.to_owned(),
                public_key,
                revoked_effective: None,
            },
        );
        Ok(())
    }

    /// Re-revoking keeps whichever effective date is earlier.
    pub fn revoke_device(
        &mut self,
        device_id: &str,
        effective: Timestamp,
    ) -> Result<Timestamp, RegistryError> {
        let entry = self
            .entries
            .get_mut(device_id)
            .ok_or_else(|| RegistryError::UnknownDevice(device_id.to_owned()))?;
        let effective = entry
            .revoked_effective
            .map_or(effective, |prev| prev.min(effective));
        entry.revoked_effective = Some(effective);
        Ok(effective)
    }

    pub fn lookup(&self, device_id: &str) -> Result<&RegistryEntry, RegistryError> {
        self.entries
            .get(device_id)
            .ok_or_else(|| RegistryError::UnknownDevice(device_id.to_owned()))
    }

    /// Unknown devices are refused. A signature dated exactly on the
    /// effective date still counts as before the revocation.
    pub fn revocation_status(&self, device_id: &str, signed_at: Timestamp) -> RevocationStatus {
        match self.entries.get(device_id) {
            None => RevocationStatus::Refused,
            Some(RegistryEntry {
                revoked_effective: None,
                ..
            }) => RevocationStatus::Trusted,
            Some(RegistryEntry {
                revoked_effective: Some(effective),
                ..
            }) => {
                if signed_at > *effective {
                    RevocationStatus::Refused
                } else {
                    RevocationStatus::SignedBeforeRevocation
                }
            }
        }
    }

    fn apply_line(&mut self, line_no: usize, line: &str) -> Result<(), RegistryError> {
        let corrupt = |reason: &str| RegistryError::CorruptLog {
            line: line_no,
            reason: reason.to_owned(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [action, device_id, value] = fields[..] else {
            return Err(corrupt("expected three tab-separated fields"));
        };
        match action {
            "REG" => {
                let raw = BASE64.decode(value).map_err(|_| corrupt("bad base64 key"))?;
                let key = PublicKey::from_sec1_bytes(&raw).map_err(|_| corrupt("bad key"))?;
                self.register_device(device_id, key)
                    .map_err(|e| corrupt(&e.to_string()))
            }
            "REV" => {
                let ts = Timestamp::parse_rfc3339(value).ok_or_else(|| corrupt("bad date"))?;
                self.revoke_device(device_id, ts)
                    .map(|_| ())
                    .map_err(|e| corrupt(&e.to_string()))
            }
            _ => Err(corrupt("unknown action")),
        }
    }
}

pub fn register_record(device_id: &str, key: &PublicKey) -> String {
    format!("REG\t{device_id}\t{}\n", BASE64.encode(key.to_sec1_bytes()))
}

pub fn revoke_record(device_id: &str, effective: Timestamp) -> String {
    format!("REV\t{device_id}\t{}\n", effective.to_rfc3339())
}

/// Registry shared between request handlers. Readers run concurrently;
/// a mutation holds the write lock until its log record is flushed.
#[derive(Debug)]
pub struct SharedRegistry {
    inner: RwLock<TrustRegistry>,
    log: Option<Mutex<(PathBuf, File)>>,
}

impl SharedRegistry {
    pub fn in_memory(registry: TrustRegistry) -> Self {
        Self {
            inner: RwLock::new(registry),
            log: None,
        }
    }

    /// Replay `path` (if it exists) and keep appending to it.
    pub fn open(path: &Path) -> Result<Self, RegistryError> {
        let mut registry = TrustRegistry::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                registry.apply_line(i + 1, &line)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: RwLock::new(registry),
            log: Some(Mutex::new((path.to_owned(), file))),
        })
    }

    fn append(&self, record: &str) -> Result<(), RegistryError> {
        if let Some(log) = &self.log {
            let mut guard = log.lock();
            guard.1.write_all(record.as_bytes())?;
            guard.1.sync_data()?;
        }
        Ok(())
    }

    pub fn register_device(&self, device_id: &str, key: PublicKey) -> Result<(), RegistryError> {
        let mut reg = self.inner.write();
        let record = register_record(device_id, &key);
        reg.register_device(device_id, key)?;
        self.append(&record)
    }

    pub fn revoke_device(
        &self,
        device_id: &str,
        effective: Timestamp,
    ) -> Result<Timestamp, RegistryError> {
        let mut reg = self.inner.write();
        let effective = reg.revoke_device(device_id, effective)?;
        self.append(&revoke_record(device_id, effective))?;
        Ok(effective)
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, TrustRegistry> {
        self.inner.read()
    }

    pub fn snapshot(&self) -> TrustRegistry {
        self.inner.read().clone()
    }
}
