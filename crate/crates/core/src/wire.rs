//! Length-prefixed multipart bodies and `key=value` metadata records used
//! on the notary's HTTP interface.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("body truncated")]
    Truncated,
    #[error("trailing bytes after last part")]
    TrailingBytes,
    #[error("part too large to encode")]
    Oversize,
    #[error("expected at least {0} parts")]
    MissingPart(usize),
    #[error("metadata: {0}")]
    Metadata(String),
}

/// `u32` part count, then `u32` length + bytes for each part, big-endian.
pub fn encode_parts<P: AsRef<[u8]>>(parts: &[P]) -> Result<Vec<u8>, WireError> {
    let count = u32::try_from(parts.len()).map_err(|_| WireError::Oversize)?;
    let total: usize = parts.iter().map(|p| p.as_ref().len() + 4).sum();
    let mut out = Vec::with_capacity(4 + total);
    out.extend_from_slice(&count.to_be_bytes());
    for p in parts {
        let p = p.as_ref();
        let len = u32::try_from(p.len()).map_err(|_| WireError::Oversize)?;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(p);
    }
    Ok(out)
}

pub fn decode_parts(body: &[u8]) -> Result<Vec<Vec<u8>>, WireError> {
    fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], WireError> {
        if buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = buf.split_at(n);
        *buf = rest;
        Ok(head)
    }
    let mut buf = body;
    let count = u32::from_be_bytes(take(&mut buf, 4)?.try_into().unwrap()) as usize;
    // Each part needs at least its 4-byte length, so cap the allocation.
    let mut parts = Vec::with_capacity(count.min(buf.len() / 4));
    for _ in 0..count {
        let len = u32::from_be_bytes(take(&mut buf, 4)?.try_into().unwrap()) as usize;
        parts.push(take(&mut buf, len)?.to_vec());
    }
    if !buf.is_empty() {
        return Err(WireError::TrailingBytes);
    }
    Ok(parts)
}

/// Ordered `key=value` lines. Keys and values must not contain newlines;
/// keys must not contain `=`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata(BTreeMap<String, String>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.0.insert(key.to_owned(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, WireError> {
        self.get(key)
            .ok_or_else(|| WireError::Metadata(format!("missing {key}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        let mut out = String::new();
        for (k, v) in &self.0 {
            if k.is_empty() || k.contains(['=', '\n', '\r']) || v.contains(['\n', '\r']) {
                return Err(WireError::Metadata(format!("unencodable entry {k:?}")));
            }
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        Ok(out.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| WireError::Metadata("not UTF-8".into()))?;
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WireError::Metadata(format!("bad line {line:?}")))?;
            map.insert(k.to_owned(), v.to_owned());
        }
        Ok(Self(map))
    }
}
