//! Text embedding providers and the on-disk embedding cache.
//!
//! Cache layout: `<cache>/<hh>/<sha256>.vec`, where the hash covers the
//! provider id and the text. Each file is a 12-byte header (`PBEV`, format
//! version `u16`, reserved `u16`, dimension `u32`, all little-endian)
//! followed by `dim` little-endian `f32` values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::{fnv1a64, words};

pub type Embedding = Vec<f64>;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("embedding request failed: {0}")]
    Network(String),
    #[error("unexpected embedding response: {0}")]
    BadResponse(String),
    #[error("embedding cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("missing API key: set {0}")]
    MissingKey(String),
}

impl EmbedError {
    fn is_retryable(&self) -> bool {
        match self {
            EmbedError::Network(_) => true,
            EmbedError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies provider and model; part of every cache key.
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }
}

/// Offline embedder: signed feature hashing of word unigrams and bigrams,
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

pub const DEFAULT_HASHING_DIM: usize = 256;

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn add(&self, v: &mut [f64], feature: &str) {
        let h = fnv1a64(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_HASHING_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let tokens = words(text);
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            self.add(&mut v, &format!("u:{t}"));
        }
        for pair in tokens.windows(2) {
            self.add(&mut v, &format!("b:{} {}", pair[0], pair[1]));
        }
        // Punctuation-only input, or features cancelling out exactly.
        let mut salt = 0u32;
        while v.iter().all(|x| *x == 0.0) {
            self.add(&mut v, &format!("raw{salt}:{}", text.trim()));
            salt += 1;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Settings for building an embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    /// `hashing` (offline) or `openai` (any OpenAI-compatible endpoint).
    pub provider: String,
    pub model: String,
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub hashing_dim: usize,
    pub cache_dir: Option<PathBuf>,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: "hashing".into(),
            model: "text-embedding-3-large".into(),
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            hashing_dim: DEFAULT_HASHING_DIM,
            cache_dir: None,
            max_retries: 3,
            timeout_secs: 60,
            max_in_flight: 4,
        }
    }
}

impl EmbeddingConfig {
    pub fn describe(&self) -> String {
        match self.provider.as_str() {
            "hashing" => format!("hashing-{}", self.hashing_dim),
            _ => format!("{}:{}", self.provider, self.model),
        }
    }
}

/// Builds the configured embedder, wrapped in a cache when `cache_dir` is set.
pub fn build_embedder(config: &EmbeddingConfig) -> Result<Box<dyn Embedder>, EmbedError> {
    let base: Box<dyn Embedder> = match config.provider.as_str() {
        "hashing" => Box::new(HashingEmbedder::new(config.hashing_dim)),
        "openai" => Box::new(HttpEmbedder::new(config.clone())),
        other => {
            return Err(EmbedError::BadResponse(format!("unknown embedding provider {other:?}")))
        }
    };
    Ok(match &config.cache_dir {
        Some(dir) => Box::new(CachedEmbedder::new(base, EmbeddingCache::new(dir))),
        None => base,
    })
}

/// OpenAI-compatible `/embeddings` client with bounded retries.
pub struct HttpEmbedder {
    config: EmbeddingConfig,
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingConfig) -> Self {
        HttpEmbedder { config, client: OnceLock::new() }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        // Built lazily so construction is safe inside an async runtime.
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(self.config.timeout_secs))
                .build()
                .expect("HTTP client builds")
        })
    }

    fn request_once(&self, key: &str, text: &str) -> Result<Embedding, EmbedError> {
        let url = format!("{}/embeddings", self.config.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.config.model, "input": text });
        debug!("POST {url} (Authorization: Bearer ***) body={body}");
        let resp = self
            .client()
            .post(&url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| EmbedError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| EmbedError::Network(e.to_string()))?;
        debug!("response {status}: {} bytes", text.len());
        if !(200..300).contains(&status) {
            return Err(EmbedError::Http { status, body: text });
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        json["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbedError::BadResponse("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| EmbedError::BadResponse("non-numeric value".into())))
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("{}:{}", self.config.provider, self.config.model)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| EmbedError::MissingKey(self.config.api_key_env.clone()))?;
        let mut attempt = 0;
        loop {
            match self.request_once(&key, text) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    let backoff = Duration::from_millis(500 * 2u64.pow(attempt - 1));
                    warn!("embedding attempt {attempt} failed ({e}); retrying in {backoff:?}");
                    thread::sleep(backoff);
                }
                other => return other,
            }
        }
    }
}

/// Content-addressed vector files.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &[u8; 4] = b"PBEV";
const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 12;

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EmbeddingCache { dir: dir.into() }
    }

    pub fn key(provider_id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(provider_id.as_bytes());
        h.update(b"\n");
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.vec"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Embedding>, EmbedError> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e.to_string())),
        };
        decode_vector(&bytes).map(Some).map_err(|m| cache_err(&path, m))
    }

    /// Stores `v` rounded to `f32`; written to a temp file then renamed.
    pub fn put(&self, key: &str, v: &[f64]) -> Result<(), EmbedError> {
        let path = self.path(key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| cache_err(parent, e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| cache_err(parent, e.to_string()))?;
        tmp.write_all(&encode_vector(v)).map_err(|e| cache_err(&path, e.to_string()))?;
        tmp.persist(&path).map_err(|e| cache_err(&path, e.to_string()))?;
        Ok(())
    }
}

fn cache_err(path: &Path, message: String) -> EmbedError {
    EmbedError::Cache { path: path.to_path_buf(), message }
}

fn encode_vector(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * v.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

fn decode_vector(bytes: &[u8]) -> Result<Embedding, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
        return Err("not an embedding file".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * dim {
        return Err(format!("expected {dim} values, file holds {} bytes", body.len()));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

/// Serves vectors from an [`EmbeddingCache`], filling it on misses. Misses
/// return the same `f32`-rounded values a later hit will return.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: EmbeddingCache,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, cache: EmbeddingCache) -> Self {
        CachedEmbedder { inner, cache }
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let key = EmbeddingCache::key(&self.inner.id(), text);
        if let Some(v) = self.cache.get(&key)? {
            return Ok(v);
        }
        let v = self.inner.embed(text)?;
        self.cache.put(&key, &v)?;
        Ok(v.iter().map(|x| *x as f32 as f64).collect())
    }
}

/// Embeds `texts` with at most `max_in_flight` concurrent requests; output
/// order matches input order.
pub fn embed_all<E: Embedder + ?Sized>(
    embedder: &E,
    texts: &[&str],
    max_in_flight: usize,
) -> Result<Vec<Embedding>, EmbedError> {
    let workers = max_in_flight.max(1).min(texts.len().max(1));
    if workers == 1 {
        return texts.iter().map(|t| embedder.embed(t)).collect();
    }
    let mut slots: Vec<Option<Result<Embedding, EmbedError>>> = (0..texts.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let r = embedder.embed(texts[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn hashing_is_deterministic_and_discriminative() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("park").unwrap(), e.embed("park").unwrap());
        assert_ne!(e.embed("park").unwrap(), e.embed("pool").unwrap());
    }

    #[test]
    fn hashing_output_has_unit_norm() {
        let e = HashingEmbedder::new(64);
        for text in ["park", "Rénovation du parc des Argoulets", "!!!", "a a a a", "x"] {
            let v = e.embed(text).unwrap();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{text}: {norm}");
        }
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(HashingEmbedder::default().embed("  "), Err(EmbedError::EmptyText)));
    }

    struct Counting<'a>(&'a AtomicUsize);
    impl Embedder for Counting<'_> {
        fn id(&self) -> String {
            "counting".into()
        }
        fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            HashingEmbedder::new(16).embed(text).map(|v| v.iter().map(|x| x / 3.0).collect())
        }
    }

    #[test]
    fn cache_hits_are_bitwise_identical_and_free() {
        let dir = tempfile::tempdir().unwrap();
        let calls = AtomicUsize::new(0);
        let e = CachedEmbedder::new(Counting(&calls), EmbeddingCache::new(dir.path()));
        let first = e.embed("new playground").unwrap();
        let second = e.embed("new playground").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(
            first.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            second.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cache_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let key = EmbeddingCache::key("p", "t");
        cache.put(&key, &[1.0, -0.5]).unwrap();
        let bytes = fs::read(cache.path(&key)).unwrap();
        assert_eq!(&bytes[..4], b"PBEV");
        assert_eq!(bytes.len(), 12 + 8);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), -0.5);
        assert_eq!(cache.get(&key).unwrap(), Some(vec![1.0, -0.5]));

        fs::write(cache.path(&key), &bytes[..14]).unwrap();
        assert!(matches!(cache.get(&key), Err(EmbedError::Cache { .. })));
    }

    #[test]
    fn embed_all_preserves_order() {
        let e = HashingEmbedder::new(32);
        let texts = ["a b", "c d", "e f", "g h", "i j"];
        let parallel = embed_all(&e, &texts, 3).unwrap();
        let serial: Vec<_> = texts.iter().map(|t| e.embed(t).unwrap()).collect();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn missing_key_is_reported() {
        let cfg = EmbeddingConfig {
            provider: "openai".into(),
            api_key_env: "PBFORECAST_TEST_UNSET_KEY".into(),
            ..Default::default()
        };
        let e = build_embedder(&cfg).unwrap();
        assert!(matches!(e.embed("text"), Err(EmbedError::MissingKey(_))));
    }
}
