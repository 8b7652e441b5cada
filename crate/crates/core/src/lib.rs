//! Semantic provenance for images.
//!
//! A notary signs what an image *means* (face identities and placement,
//! scene label) rather than its bytes, so the signature survives benign
//! edits such as scaling, cropping, small rotations and tone changes while
//! still exposing face swaps and replacements.

pub mod codec;
pub mod config;
pub mod crypto;
pub mod engine;
pub mod imageops;
pub mod notary;
pub mod perception;
pub mod registry;
pub mod types;
pub mod wire;

pub use codec::{CodecError, SignatureContainer};
pub use config::Config;
pub use crypto::{KeyPair, PublicKey};
pub use engine::{EngineConfig, EngineError, TransformParams};
pub use notary::{Clock, FixedClock, Notary, NotaryError, SystemClock};
pub use perception::Perception;
pub use registry::{SharedRegistry, TrustRegistry};
pub use types::*;
