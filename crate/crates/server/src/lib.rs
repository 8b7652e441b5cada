//! Notary HTTP service: `POST /v1/{register,sign,verify,revoke}` with
//! length-prefixed multipart bodies, plus a blocking client.

pub mod api;
pub mod client;
pub mod http;

use std::path::PathBuf;

pub use api::{ApiError, NotaryApi};
pub use client::{HttpClient, DEFAULT_ADDR};
pub use http::{router, serve, ServerHandle};

pub const ADDR_ENV: &str = "PROVES_ADDR";
pub const DATA_DIR_ENV: &str = "PROVES_DATA_DIR";
pub const CONFIG_ENV: &str = "PROVES_CONFIG";

/// Service address from `PROVES_ADDR`, else the default.
pub fn addr_from_env() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| DEFAULT_ADDR.to_owned())
}

/// Data directory from `PROVES_DATA_DIR`, else `./proves-data`.
pub fn data_dir_from_env() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("proves-data"))
}

/// Config from the file named by `PROVES_CONFIG`, else defaults.
pub fn config_from_env() -> Result<proves_core::Config, proves_core::config::ConfigError> {
    match std::env::var_os(CONFIG_ENV) {
        Some(p) => proves_core::Config::load(&PathBuf::from(p)),
        None => Ok(proves_core::Config::default()),
    }
}
