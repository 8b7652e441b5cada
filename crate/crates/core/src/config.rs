//! Flat `key=value` configuration files.

use std::path::Path;

use thiserror::Error;

use crate::engine::EngineConfig;
use crate::perception::{Perception, PerceptionError, BACKEND_KEY};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?}")]
    InvalidValue { key: String, value: String },
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub engine: EngineConfig,
    pub backend: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            backend: "reference".to_owned(),
        }
    }
}

impl Config {
    /// Parse `key=value` lines. Blank lines and `#` comments are ignored;
    /// unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "expected key=value".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let invalid = || ConfigError::InvalidValue {
                key: key.to_owned(),
                value: value.to_owned(),
            };
            let e = &mut cfg.engine;
            match key {
                "theta" => e.theta = value.parse().map_err(|_| invalid())?,
                "gamma" => e.gamma = value.parse().map_err(|_| invalid())?,
                "min_seed_pairs" => e.min_seed_pairs = value.parse().map_err(|_| invalid())?,
                "rotation_tolerance_deg" => {
                    e.rotation_tolerance_deg = value.parse().map_err(|_| invalid())?
                }
                "jitter_fractions" => {
                    e.jitter_fractions = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| invalid())?
                }
                k if k == BACKEND_KEY => cfg.backend = value.to_owned(),
                other => return Err(ConfigError::UnknownKey(other.to_owned())),
            }
        }
        cfg.engine.validate()?;
        Perception::from_backend(&cfg.backend)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn perception(&self) -> Perception {
        Perception::from_backend(&self.backend).expect("backend validated at parse time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let cfg = Config::parse(
            "# tuned\ntheta = 0.75\ngamma=0.8\njitter_fractions=0, 0.1,-0.1\nmin_seed_pairs=3\n\
             rotation_tolerance_deg=2\nperception.backend=reference\n",
        )
        .unwrap();
        assert_eq!(cfg.engine.theta, 0.75);
        assert_eq!(cfg.engine.gamma, 0.8);
        assert_eq!(cfg.engine.jitter_fractions, vec![0.0, 0.1, -0.1]);
        assert_eq!(cfg.engine.min_seed_pairs, 3);
        assert_eq!(cfg.engine.rotation_tolerance_deg, 2.0);
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::parse("theta"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("colour=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(Config::parse("theta=abc"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(Config::parse("gamma=0.2"), Err(ConfigError::Engine(_))));
        assert!(matches!(
            Config::parse("perception.backend=mtcnn"),
            Err(ConfigError::Perception(_))
        ));
    }
}
