//! Chat-completion backends.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::{Message, ModelTier, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub model_tier: ModelTier,
    pub temperature: f64,
    /// Re-sampling attempt; part of the replay key so that a retry after a
    /// parse failure can be recorded separately.
    pub sample: u32,
}

impl CompletionRequest {
    /// Hex SHA-256 of the canonical JSON form of the request.
    pub fn key(&self) -> String {
        let json = serde_json::to_vec(self).expect("requests serialize");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("no replay fixture for request {key} in {dir}")]
    FixtureMissing { key: String, dir: String },
    #[error("fixture {path}: {message}")]
    FixtureCorrupt { path: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend request failed: {0}")]
    Transport(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    request: CompletionRequest,
    completion: Completion,
}

/// Serves recorded completions from `<dir>/<key>.json`.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let key = request.key();
        let path = self.dir.join(format!("{key}.json"));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::FixtureMissing { key, dir: self.dir.display().to_string() })
            }
            Err(e) => return Err(e.into()),
        };
        let fixture: FixtureFile = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::FixtureCorrupt { path: path.display().to_string(), message: e.to_string() })?;
        Ok(fixture.completion)
    }
}

/// Forwards to another backend and writes every completion as a replay
/// fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(RecordingBackend { inner, dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let completion = self.inner.complete(request)?;
        let fixture = FixtureFile { request: request.clone(), completion: completion.clone() };
        let mut text = serde_json::to_string_pretty(&fixture).expect("fixtures serialize");
        text.push('\n');
        std::fs::write(self.dir.join(format!("{}.json", request.key())), text)?;
        Ok(completion)
    }
}

/// Answers from a function; useful for offline authoring of fixtures.
pub struct ScriptedBackend<F> {
    respond: F,
    latency_ms: u64,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&CompletionRequest) -> Option<String> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        ScriptedBackend { respond, latency_ms: 0 }
    }

    /// Latency reported with every completion.
    pub fn with_latency(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }
}

impl<F> LlmBackend for ScriptedBackend<F>
where
    F: Fn(&CompletionRequest) -> Option<String> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        match (self.respond)(request) {
            Some(text) => Ok(Completion { text, latency_ms: self.latency_ms }),
            None => Err(BackendError::Transport("scripted backend has no answer for this request".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub api_base: String,
    pub standard_model: String,
    pub strong_model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_secs: u64,
    /// Attempts per request for transport errors.
    pub max_attempts: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            api_base: "https://api.openai.com/v1".into(),
            standard_model: "gpt-3.5-turbo".into(),
            strong_model: "gpt-4".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout_secs: 120,
            max_attempts: 3,
        }
    }
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct LiveBackend {
    config: BackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub fn from_env(config: BackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(LiveBackend { config, api_key, client })
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        let model = match request.model_tier {
            ModelTier::Standard => &self.config.standard_model,
            ModelTier::Strong => &self.config.strong_model,
        };
        let messages: Vec<serde_json::Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                serde_json::json!({ "role": role, "content": m.text })
            })
            .collect();
        serde_json::json!({ "model": model, "messages": messages, "temperature": request.temperature, "n": 1 })
    }
}

impl LlmBackend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let url = format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'));
        let body = self.body(request);
        let mut last_error = String::new();
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 * 2u64.pow(attempt)));
            }
            let start = Instant::now();
            let response = match self.client.post(&url).bearer_auth(&self.api_key).json(&body).send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last_error = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(BackendError::Transport(format!("HTTP {status}: {}", response.text().unwrap_or_default())));
            }
            let value: serde_json::Value = response.json().map_err(|e| BackendError::Transport(e.to_string()))?;
            let text = value["choices"][0]["message"]["content"]
                .as_str()
                .ok_or_else(|| BackendError::Transport("response has no message content".into()))?;
            return Ok(Completion { text: text.to_string(), latency_ms: start.elapsed().as_millis() as u64 });
        }
        Err(BackendError::Transport(last_error))
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
}

/// Which backend to build, as named in configuration files and on the
/// command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Replay { dir: PathBuf },
    Live {
        #[serde(flatten)]
        config: BackendConfig,
    },
    /// Hand-written answers, see [`super::CannedBackend`].
    Canned { exercises_dir: PathBuf, canned_dir: PathBuf },
    /// Wraps another backend and writes replay fixtures to `dir`.
    Record { dir: PathBuf, inner: Box<BackendSpec> },
}

impl BackendSpec {
    pub fn build(&self) -> Result<Box<dyn LlmBackend>, BackendError> {
        Ok(match self {
            BackendSpec::Replay { dir } => {
                if !dir.is_dir() {
                    return Err(BackendError::Config(format!("replay directory {} does not exist", dir.display())));
                }
                Box::new(ReplayBackend::new(dir.clone()))
            }
            BackendSpec::Live { config } => Box::new(LiveBackend::from_env(config.clone())?),
            BackendSpec::Canned { exercises_dir, canned_dir } => Box::new(super::CannedBackend::load(exercises_dir, canned_dir)?),
            BackendSpec::Record { dir, inner } => Box::new(RecordingBackend::new(inner.build()?, dir.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str, sample: u32) -> CompletionRequest {
        CompletionRequest { messages: vec![Message::new(Role::User, text)], model_tier: ModelTier::Standard, temperature: 0.3, sample }
    }

    #[test]
    fn keys_depend_on_every_field() {
        let a = request("hi", 0);
        assert_eq!(a.key(), request("hi", 0).key());
        assert_ne!(a.key(), request("hi", 1).key());
        assert_ne!(a.key(), request("ho", 0).key());
        assert_ne!(a.key(), CompletionRequest { temperature: 0.7, ..a.clone() }.key());
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let scripted = ScriptedBackend::new(|r: &CompletionRequest| Some(format!("echo {}", r.messages[0].text))).with_latency(42);
        let recorder = RecordingBackend::new(scripted, dir.path()).unwrap();
        let first = recorder.complete(&request("hi", 0)).unwrap();
        let replay = ReplayBackend::new(dir.path());
        assert_eq!(replay.complete(&request("hi", 0)).unwrap(), first);
        assert_eq!(first.latency_ms, 42);
        assert!(matches!(replay.complete(&request("other", 0)), Err(BackendError::FixtureMissing { .. })));
    }

    #[test]
    fn live_backend_needs_key() {
        let config = BackendConfig { api_key_env: "HYPOCOMPASS_TEST_UNSET_KEY".into(), ..Default::default() };
        assert!(matches!(LiveBackend::from_env(config), Err(BackendError::Config(_))));
    }
}
