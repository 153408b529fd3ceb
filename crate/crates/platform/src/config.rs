//! Service configuration, read from TOML.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! network = "networks/thessaloniki40.json"
//! data_dir = "var"
//! gap_threshold_s = 900
//! salt = { env = "SAFEMOBILITY_SALT" }
//! profile_key = { file = "secrets/profile.key" }
//! admin_token = { hex = "..." }
//!
//! [feeds]
//! parking = "fixtures/feeds/parking.json"
//! air_quality = "https://example.org/air.json"
//! poll_interval_s = 60
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use safemobility_core::identity::{DEFAULT_PBKDF2_ROUNDS, MIN_SALT_LEN};
use safemobility_core::trips::DEFAULT_GAP_SECONDS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("config: {0}")]
    Parse(String),
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: &'static str, path: String },
    #[error("{0}: {1}")]
    Secret(&'static str, String),
    #[error("{0}")]
    Invalid(String),
}

/// Where a secret comes from. Values are hex encoded.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum SecretSource {
    Hex(String),
    Env(String),
    File(PathBuf),
}

impl SecretSource {
    pub fn resolve(&self, field: &'static str, base: &Path) -> Result<Vec<u8>, ConfigError> {
        let text = match self {
            SecretSource::Hex(h) => h.clone(),
            SecretSource::Env(var) => {
                std::env::var(var).map_err(|_| ConfigError::Secret(field, format!("environment variable {var} not set")))?
            }
            SecretSource::File(p) => {
                let p = base.join(p);
                std::fs::read_to_string(&p).map_err(|e| ConfigError::Io(p.display().to_string(), e))?
            }
        };
        hex::decode(text.trim()).map_err(|e| ConfigError::Secret(field, format!("not hex: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct FeedConfig {
    /// Path or http(s) URL.
    pub parking: Option<String>,
    pub air_quality: Option<String>,
    #[serde(default = "default_poll")]
    pub poll_interval_s: u64,
}

fn default_poll() -> u64 {
    60
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self { parking: None, air_quality: None, poll_interval_s: default_poll() }
    }
}

fn default_gap() -> i64 {
    DEFAULT_GAP_SECONDS
}

fn default_rounds() -> u32 {
    DEFAULT_PBKDF2_ROUNDS
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub network: PathBuf,
    /// Holds the event log and account store.
    pub data_dir: PathBuf,
    pub salt: SecretSource,
    pub profile_key: SecretSource,
    /// Bearer token for `/admin/*`; admin endpoints are disabled without it.
    pub admin_token: Option<SecretSource>,
    #[serde(default = "default_gap")]
    pub gap_threshold_s: i64,
    #[serde(default = "default_rounds")]
    pub pbkdf2_rounds: u32,
    #[serde(default)]
    pub feeds: FeedConfig,
    /// Intersection SPaT fixture.
    pub intersections: Option<PathBuf>,
    /// Detections CSV ingested at startup.
    pub replay: Option<PathBuf>,
}

/// Secrets decoded from their sources.
#[derive(Clone)]
pub struct Secrets {
    pub salt: Vec<u8>,
    pub profile_key: Vec<u8>,
    pub admin_token: Option<String>,
}

impl std::fmt::Debug for Secrets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Secrets(..)")
    }
}

impl ApiConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.network);
        fix(&mut self.data_dir);
        for p in [&mut self.intersections, &mut self.replay].into_iter().flatten() {
            fix(p);
        }
        for src in [&mut self.feeds.parking, &mut self.feeds.air_quality].into_iter().flatten() {
            if !src.starts_with("http://") && !src.starts_with("https://") && Path::new(src.as_str()).is_relative() {
                *src = base.join(&*src).display().to_string();
            }
        }
        for s in [&mut self.salt, &mut self.profile_key].into_iter().chain(self.admin_token.as_mut()) {
            if let SecretSource::File(p) = s {
                fix(p);
            }
        }
    }

    /// Checks referenced paths and decodes secrets.
    pub fn validate(&self) -> Result<Secrets, ConfigError> {
        let must_exist = |field: &'static str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { field, path: p.display().to_string() })
            }
        };
        must_exist("network", &self.network)?;
        if let Some(p) = &self.intersections {
            must_exist("intersections", p)?;
        }
        if let Some(p) = &self.replay {
            must_exist("replay", p)?;
        }
        for (field, src) in [("feeds.parking", &self.feeds.parking), ("feeds.air_quality", &self.feeds.air_quality)] {
            if let Some(s) = src {
                if !s.starts_with("http://") && !s.starts_with("https://") {
                    must_exist(field, Path::new(s))?;
                }
            }
        }
        if self.gap_threshold_s <= 0 {
            return Err(ConfigError::Invalid("gap_threshold_s must be positive".into()));
        }
        if self.pbkdf2_rounds == 0 {
            return Err(ConfigError::Invalid("pbkdf2_rounds must be positive".into()));
        }
        let here = Path::new(".");
        let salt = self.salt.resolve("salt", here)?;
        if salt.len() < MIN_SALT_LEN {
            return Err(ConfigError::Secret("salt", format!("need at least {MIN_SALT_LEN} bytes")));
        }
        let profile_key = self.profile_key.resolve("profile_key", here)?;
        if profile_key.len() != 32 {
            return Err(ConfigError::Secret("profile_key", "need exactly 32 bytes".into()));
        }
        let admin_token = match &self.admin_token {
            Some(src) => Some(hex::encode(src.resolve("admin_token", here)?)),
            None => None,
        };
        Ok(Secrets { salt, profile_key, admin_token })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        network = "net.json"
        data_dir = "var"
        salt = { hex = "000102030405060708090a0b0c0d0e0f" }
        profile_key = { hex = "0000000000000000000000000000000000000000000000000000000000000000" }
    "#;

    #[test]
    fn defaults() {
        let cfg = ApiConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.bind, default_bind());
        assert_eq!(cfg.gap_threshold_s, 900);
        assert_eq!(cfg.feeds.poll_interval_s, 60);
        assert!(cfg.admin_token.is_none());
    }

    #[test]
    fn missing_paths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ApiConfig::from_toml(MINIMAL).unwrap();
        cfg.rebase(dir.path());
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath { field: "network", .. })));
        std::fs::write(dir.path().join("net.json"), "{}").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.feeds.parking = Some(dir.path().join("nope.json").display().to_string());
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath { field: "feeds.parking", .. })));
    }

    #[test]
    fn secrets() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("net.json"), "{}").unwrap();
        let mut cfg = ApiConfig::from_toml(MINIMAL).unwrap();
        cfg.rebase(dir.path());
        cfg.salt = SecretSource::Hex("0011".into());
        assert!(matches!(cfg.validate(), Err(ConfigError::Secret("salt", _))));
        std::fs::write(dir.path().join("key"), "ab".repeat(32)).unwrap();
        cfg.salt = SecretSource::File(dir.path().join("key"));
        cfg.profile_key = SecretSource::Env("SAFEMOBILITY_TEST_UNSET_VAR".into());
        assert!(matches!(cfg.validate(), Err(ConfigError::Secret("profile_key", _))));
        cfg.profile_key = SecretSource::File(dir.path().join("key"));
        let s = cfg.validate().unwrap();
        assert_eq!(s.salt.len(), 32);
    }

    #[test]
    fn unknown_field() {
        assert!(ApiConfig::from_toml(&format!("{MINIMAL}\nport = 1")).is_err());
    }
}
