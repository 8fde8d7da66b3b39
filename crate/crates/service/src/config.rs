//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use hypocompass::harness::HarnessConfig;
use hypocompass::pipeline::{BackendSpec, PipelineConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Single-file store; created if missing.
    pub store_path: PathBuf,
    #[serde(default)]
    pub harness: HarnessConfig,
    pub backend: BackendSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub tokens: Tokens,
}

/// Bearer tokens per role. Instructor tokens may also use student routes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tokens {
    #[serde(default)]
    pub instructor: Vec<String>,
    #[serde(default)]
    pub student: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut config: ServiceConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Invalid { path: path.display().to_string(), message: e.to_string() })?;
        // Relative paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        config.store_path = base.join(&config.store_path);
        config.backend = rebase(&config.backend, base);
        config.harness.validate().map_err(|e| ConfigError::Invalid { path: path.display().to_string(), message: e.to_string() })?;
        if config.tokens.instructor.is_empty() && config.tokens.student.is_empty() {
            return Err(ConfigError::Invalid { path: path.display().to_string(), message: "no bearer tokens configured".into() });
        }
        Ok(config)
    }
}

fn rebase(spec: &BackendSpec, base: &Path) -> BackendSpec {
    match spec {
        BackendSpec::Replay { dir } => BackendSpec::Replay { dir: base.join(dir) },
        BackendSpec::Canned { exercises_dir, canned_dir } => {
            BackendSpec::Canned { exercises_dir: base.join(exercises_dir), canned_dir: base.join(canned_dir) }
        }
        BackendSpec::Record { dir, inner } => BackendSpec::Record { dir: base.join(dir), inner: Box::new(rebase(inner, base)) },
        live @ BackendSpec::Live { .. } => live.clone(),
    }
}
