//! Chat-completion access with a content-addressed transcript store.
//!
//! Transcripts live at `<dir>/<key>.json`, where `key` is the SHA-256 of the
//! model name, temperature and prompt. Replay mode answers only from the store.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::{estimate_tokens, fnv1a64};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    /// Call the provider; nothing is stored.
    Live,
    /// Answer from the store when possible, otherwise call and store.
    Record,
    /// Answer only from the store.
    #[default]
    Replay,
}

impl FromStr for LlmMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "live" => Ok(LlmMode::Live),
            "record" => Ok(LlmMode::Record),
            "replay" => Ok(LlmMode::Replay),
            other => Err(format!("unknown LLM mode {other:?} (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub retry_backoff_ms: u64,
    pub mode: LlmMode,
    /// Chat-completions URL of an OpenAI-compatible provider.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub transcripts_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    /// Estimated prompt tokens allowed per minute; `None` disables limiting.
    pub tokens_per_minute: Option<u64>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            model: "gpt-4-turbo".into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 120,
            max_retries: 3,
            retry_backoff_ms: 1000,
            mode: LlmMode::Replay,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            transcripts_dir: None,
            max_in_flight: 4,
            tokens_per_minute: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("missing fixture for prompt hash {key} (replay mode never calls the provider)")]
    MissingFixture { key: String },
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("LLM provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("LLM request failed: {0}")]
    Network(String),
    #[error("unexpected LLM response: {0}")]
    BadResponse(String),
    #[error("transcript store {path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error("missing API key: set {0}")]
    MissingKey(String),
    #[error("{0} mode needs a chat backend")]
    NoBackend(&'static str),
    #[error(transparent)]
    Prompt(#[from] super::PromptError),
    #[error(transparent)]
    Embed(#[from] crate::features::EmbedError),
    #[error("{0}")]
    Invalid(String),
}

impl LlmError {
    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Network(_) => true,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One prompt/response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub created_at: DateTime<Utc>,
}

/// Content hash identifying a request.
pub fn transcript_key(model: &str, temperature: f64, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(format!("{temperature}").as_bytes());
    h.update([0]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TranscriptStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn err(&self, path: &Path, e: impl ToString) -> LlmError {
        LlmError::Store { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn get(&self, key: &str) -> Result<Option<Transcript>, LlmError> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| self.err(&path, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(self.err(&path, e)),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path(key).is_file()
    }

    /// Writes atomically; an existing transcript for the key is kept.
    pub fn put(&self, t: &Transcript) -> Result<(), LlmError> {
        let path = self.path(&t.key);
        if path.exists() {
            return Ok(());
        }
        fs::create_dir_all(&self.dir).map_err(|e| self.err(&self.dir, e))?;
        let json = serde_json::to_string_pretty(t).map_err(|e| self.err(&path, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| self.err(&self.dir, e))?;
        tmp.write_all(json.as_bytes()).map_err(|e| self.err(&path, e))?;
        tmp.write_all(b"\n").map_err(|e| self.err(&path, e))?;
        tmp.persist(&path).map_err(|e| self.err(&path, e.error))?;
        Ok(())
    }

    /// All stored transcripts, sorted by key.
    pub fn list(&self) -> Result<Vec<Transcript>, LlmError> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(self.err(&self.dir, e)),
        };
        for entry in entries {
            let path = entry.map_err(|e| self.err(&self.dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                let text = fs::read_to_string(&path).map_err(|e| self.err(&path, e))?;
                out.push(serde_json::from_str(&text).map_err(|e| self.err(&path, e))?);
            }
        }
        out.sort_by(|a: &Transcript, b| a.key.cmp(&b.key));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    /// Model name recorded in transcripts.
    fn model(&self) -> String;
    fn complete(&self, prompt: &str, config: &LlmConfig) -> Result<Completion, LlmError>;
}

/// OpenAI-compatible `/chat/completions` client.
pub struct OpenAiChat {
    config: LlmConfig,
    client: OnceLock<reqwest::blocking::Client>,
}

impl OpenAiChat {
    pub fn new(config: LlmConfig) -> Self {
        OpenAiChat { config, client: OnceLock::new() }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(self.config.timeout_secs))
                .build()
                .expect("HTTP client builds")
        })
    }
}

impl ChatBackend for OpenAiChat {
    fn model(&self) -> String {
        self.config.model.clone()
    }

    fn complete(&self, prompt: &str, config: &LlmConfig) -> Result<Completion, LlmError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| LlmError::MissingKey(config.api_key_env.clone()))?;
        let body = serde_json::json!({
            "model": config.model,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "messages": [{ "role": "user", "content": prompt }],
        });
        debug!("POST {} (Authorization: Bearer ***) model={} prompt_chars={}", config.endpoint, config.model, prompt.len());
        let resp = self
            .client()
            .post(&config.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| LlmError::Network(e.to_string()))?;
        debug!("response {status}: {} bytes", text.len());
        match status {
            200..=299 => {}
            401 | 403 => return Err(LlmError::Auth { status, body: text }),
            _ => return Err(LlmError::Http { status, body: text }),
        }
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let content = json["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?;
        Ok(Completion {
            text: content.to_string(),
            prompt_tokens: json["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: json["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        })
    }
}

/// Offline stand-in for a chat model, used to produce demo and test fixtures.
///
/// Prediction prompts get a short canned rationale and a number: the median
/// of the vote figures quoted in the prompt scaled by a hash-derived factor,
/// or, with no figures to go on, one of a few round numbers picked by hashing
/// the project category. Other prompts get a generic paragraph.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend;

pub const SCRIPTED_MODEL: &str = "scripted-offline";

impl ScriptedBackend {
    fn respond(prompt: &str) -> String {
        let h = fnv1a64(prompt.as_bytes());
        if !prompt.contains("PREDICTION: <") {
            return "Projects that are visible, affordable and useful to many residents tend to attract \
                    support; local green spaces, mobility and children's facilities are common favourites."
                .to_string();
        }
        let mut figures: Vec<u64> = prompt
            .lines()
            .filter_map(|l| l.rsplit_once("| votes: ").or_else(|| l.rsplit_once("| voix: ")))
            .filter_map(|(_, v)| v.trim().parse().ok())
            .collect();
        let value = if figures.is_empty() {
            let category = prompt
                .lines()
                .find_map(|l| l.strip_prefix("Category: ").or_else(|| l.strip_prefix("Catégorie : ")))
                .unwrap_or("");
            [150u64, 300, 600, 1200][(fnv1a64(category.as_bytes()) % 4) as usize]
        } else {
            figures.sort_unstable();
            let median = figures[figures.len() / 2] as f64;
            let factor = 0.5 + (h % 1000) as f64 / 1000.0;
            (median * factor).round() as u64
        };
        format!(
            "The project is compared with what is known about the city's past campaigns, \
             its cost and its district.\nPREDICTION: {value}"
        )
    }
}

impl ChatBackend for ScriptedBackend {
    fn model(&self) -> String {
        SCRIPTED_MODEL.to_string()
    }

    fn complete(&self, prompt: &str, _config: &LlmConfig) -> Result<Completion, LlmError> {
        let text = Self::respond(prompt);
        Ok(Completion {
            prompt_tokens: estimate_tokens(prompt) as u64,
            completion_tokens: estimate_tokens(&text) as u64,
            text,
        })
    }
}

/// Token-bucket limiter over estimated prompt tokens.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(tokens_per_minute: u64) -> Self {
        let cap = tokens_per_minute as f64;
        RateLimiter { per_minute: cap, state: Mutex::new((cap, Instant::now())) }
    }

    /// Blocks until `tokens` fit in the bucket. Requests larger than the
    /// bucket wait for a full bucket and then overdraw it.
    pub fn acquire(&self, tokens: u64) {
        let want = (tokens as f64).min(self.per_minute);
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.per_minute / 60.0;
                s.0 = (s.0 + refill).min(self.per_minute);
                s.1 = now;
                if s.0 >= want {
                    s.0 -= tokens as f64;
                    return;
                }
                Duration::from_secs_f64((want - s.0) * 60.0 / self.per_minute)
            };
            thread::sleep(wait);
        }
    }
}

/// Mode-aware front end over a backend and a transcript store.
pub struct LlmClient {
    config: LlmConfig,
    backend: Option<Box<dyn ChatBackend>>,
    store: Option<TranscriptStore>,
    limiter: Option<RateLimiter>,
}

impl LlmClient {
    pub fn new(config: LlmConfig, backend: Option<Box<dyn ChatBackend>>) -> Result<Self, LlmError> {
        let store = config.transcripts_dir.clone().map(TranscriptStore::new);
        match config.mode {
            LlmMode::Replay if store.is_none() => {
                return Err(LlmError::Invalid("replay mode needs a transcripts directory".into()))
            }
            LlmMode::Record if store.is_none() => {
                return Err(LlmError::Invalid("record mode needs a transcripts directory".into()))
            }
            LlmMode::Live | LlmMode::Record if backend.is_none() => {
                return Err(LlmError::NoBackend(if config.mode == LlmMode::Live { "live" } else { "record" }))
            }
            _ => {}
        }
        let limiter = config.tokens_per_minute.map(RateLimiter::new);
        Ok(LlmClient { config, backend, store, limiter })
    }

    /// Client for `config.mode` using the OpenAI-compatible backend.
    pub fn from_config(config: LlmConfig) -> Result<Self, LlmError> {
        let backend: Option<Box<dyn ChatBackend>> = match config.mode {
            LlmMode::Replay => None,
            _ => Some(Box::new(OpenAiChat::new(config.clone()))),
        };
        Self::new(config, backend)
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn store(&self) -> Option<&TranscriptStore> {
        self.store.as_ref()
    }

    pub fn key(&self, prompt: &str) -> String {
        transcript_key(&self.config.model, self.config.temperature, prompt)
    }

    /// Resolves one prompt according to the configured mode.
    pub fn complete(&self, prompt: &str) -> Result<Transcript, LlmError> {
        let key = self.key(prompt);
        if matches!(self.config.mode, LlmMode::Replay | LlmMode::Record) {
            if let Some(t) = self.store.as_ref().expect("checked in new").get(&key)? {
                return Ok(t);
            }
            if self.config.mode == LlmMode::Replay {
                return Err(LlmError::MissingFixture { key });
            }
        }
        let backend = self.backend.as_ref().expect("checked in new");
        if let Some(l) = &self.limiter {
            l.acquire(estimate_tokens(prompt) as u64);
        }
        let completion = self.call_with_retries(backend.as_ref(), prompt)?;
        let t = Transcript {
            key,
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            prompt: prompt.to_string(),
            response: completion.text,
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
            created_at: Utc::now(),
        };
        if self.config.mode == LlmMode::Record {
            self.store.as_ref().expect("checked in new").put(&t)?;
        }
        Ok(t)
    }

    fn call_with_retries(&self, backend: &dyn ChatBackend, prompt: &str) -> Result<Completion, LlmError> {
        let mut attempt = 0;
        loop {
            match backend.complete(prompt, &self.config) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    let backoff = Duration::from_millis(self.config.retry_backoff_ms * 2u64.pow(attempt - 1));
                    warn!("LLM attempt {attempt} failed ({e}); retrying in {backoff:?}");
                    thread::sleep(backoff);
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting {
        calls: Arc<AtomicUsize>,
        fail_first: usize,
        status: u16,
    }

    impl ChatBackend for Counting {
        fn model(&self) -> String {
            "counting".into()
        }
        fn complete(&self, prompt: &str, _: &LlmConfig) -> Result<Completion, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(LlmError::Http { status: self.status, body: "nope".into() });
            }
            Ok(Completion { text: format!("echo {prompt}\nPREDICTION: 7"), prompt_tokens: 1, completion_tokens: 1 })
        }
    }

    fn config(dir: &Path, mode: LlmMode) -> LlmConfig {
        LlmConfig { mode, transcripts_dir: Some(dir.to_path_buf()), retry_backoff_ms: 1, ..LlmConfig::default() }
    }

    fn counting(fail_first: usize, status: u16) -> (Box<dyn ChatBackend>, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        (Box::new(Counting { calls: calls.clone(), fail_first, status }), calls)
    }

    #[test]
    fn key_depends_on_model_temperature_and_prompt() {
        let k = transcript_key("m", 0.0, "p");
        assert_eq!(k.len(), 64);
        assert_eq!(k, transcript_key("m", 0.0, "p"));
        assert_ne!(k, transcript_key("m2", 0.0, "p"));
        assert_ne!(k, transcript_key("m", 0.5, "p"));
        assert_ne!(k, transcript_key("m", 0.0, "q"));
    }

    #[test]
    fn record_twice_stores_once_and_replay_reuses() {
        let dir = tempfile::tempdir().unwrap();
        let (backend, calls) = counting(0, 500);
        let rec = LlmClient::new(config(dir.path(), LlmMode::Record), Some(backend)).unwrap();
        let a = rec.complete("hello").unwrap();
        let b = rec.complete("hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(rec.store().unwrap().list().unwrap().len(), 1);

        let replay = LlmClient::new(config(dir.path(), LlmMode::Replay), None).unwrap();
        assert_eq!(replay.complete("hello").unwrap(), a);
        match replay.complete("other") {
            Err(LlmError::MissingFixture { key }) => assert_eq!(key, replay.key("other")),
            other => panic!("expected missing fixture, got {other:?}"),
        }
    }

    #[test]
    fn retries_transient_errors_only() {
        let dir = tempfile::tempdir().unwrap();
        let (backend, calls) = counting(2, 503);
        let c = LlmClient::new(config(dir.path(), LlmMode::Live), Some(backend)).unwrap();
        assert!(c.complete("x").is_ok());
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let (backend, calls) = counting(10, 503);
        let c = LlmClient::new(config(dir.path(), LlmMode::Live), Some(backend)).unwrap();
        assert!(matches!(c.complete("x"), Err(LlmError::Http { status: 503, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 4);

        let (backend, calls) = counting(10, 400);
        let c = LlmClient::new(config(dir.path(), LlmMode::Live), Some(backend)).unwrap();
        assert!(c.complete("x").is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        // Live mode never writes transcripts.
        assert!(TranscriptStore::new(dir.path()).list().unwrap().is_empty());
    }

    #[test]
    fn mode_requirements() {
        assert!(LlmClient::new(LlmConfig::default(), None).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            LlmClient::new(config(dir.path(), LlmMode::Record), None),
            Err(LlmError::NoBackend("record"))
        ));
        assert_eq!("REPLAY".parse::<LlmMode>().unwrap(), LlmMode::Replay);
    }

    #[test]
    fn live_call_without_key_fails_with_named_variable() {
        let cfg = LlmConfig { api_key_env: "PBF_TEST_UNSET_KEY".into(), mode: LlmMode::Live, ..LlmConfig::default() };
        let c = LlmClient::from_config(cfg).unwrap();
        assert!(matches!(c.complete("x"), Err(LlmError::MissingKey(v)) if v == "PBF_TEST_UNSET_KEY"));
    }

    #[test]
    fn rate_limiter_passes_within_budget() {
        let l = RateLimiter::new(6000);
        let start = Instant::now();
        l.acquire(100);
        l.acquire(100);
        assert!(start.elapsed() < Duration::from_millis(50));
    }
}
