use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{finish_vector, Embedder};
use crate::error::{Error, Result};
use crate::math::Embedding;

/// Environment variable holding a bearer token for the embedding service.
pub const API_KEY_ENV: &str = "DENSEKIT_API_KEY";
pub const DEFAULT_REMOTE_BATCH: usize = 128;

fn default_batch() -> usize {
    DEFAULT_REMOTE_BATCH
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub dim: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Total attempts per request, including the first.
    #[serde(default = "default_retries")]
    pub attempts: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dim,
            batch_size: default_batch(),
            max_in_flight: default_in_flight(),
            attempts: default_retries(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for an HTTP embedding service.
///
/// Protocol: `POST {endpoint}` with `{"texts": [...]}`, answered by
/// `{"embeddings": [[...], ...]}`. Inputs are sent in batches of
/// `batch_size` with at most `max_in_flight` requests outstanding.
pub struct RemoteEmbedder {
    cfg: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: RemoteConfig, api_key: Option<String>) -> Result<Self> {
        if cfg.dim == 0 || cfg.batch_size == 0 || cfg.max_in_flight == 0 || cfg.attempts == 0 {
            return Err(Error::config("remote embedder needs dim, batch_size, max_in_flight and attempts > 0"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::config(format!("http client: {e}")))?;
        Ok(Self { cfg, api_key, client })
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        let mut req = self.client.post(&self.cfg.endpoint).json(&EmbedRequest { texts });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        let body: EmbedResponse =
            resp.json().map_err(|e| Attempt::Fatal(Error::Protocol(format!("bad response body: {e}"))))?;
        Ok(body.embeddings)
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let mut last = String::new();
        for attempt in 1..=self.cfg.attempts {
            match self.post_once(texts) {
                Ok(rows) => return self.check_rows(texts.len(), rows),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    last = msg;
                    if attempt < self.cfg.attempts {
                        std::thread::sleep(Duration::from_millis(25 * u64::from(attempt)));
                    }
                }
            }
        }
        Err(Error::Transport { attempts: self.cfg.attempts, message: last })
    }

    fn check_rows(&self, expected: usize, rows: Vec<Vec<f64>>) -> Result<Vec<Embedding>> {
        if rows.len() != expected {
            return Err(Error::Protocol(format!("asked for {expected} embeddings, got {}", rows.len())));
        }
        rows.into_iter()
            .map(|row| {
                if row.len() != self.cfg.dim {
                    return Err(Error::Protocol(format!(
                        "expected dim {}, service returned {}",
                        self.cfg.dim,
                        row.len()
                    )));
                }
                finish_vector(row)
            })
            .collect()
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let chunks: Vec<&[String]> = texts.chunks(self.cfg.batch_size).collect();
        let results: Mutex<Vec<Option<Result<Vec<Embedding>>>>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(chunks.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(chunk) = chunks.get(i) else { break };
                    let r = self.embed_chunk(chunk);
                    let failed = r.is_err();
                    results.lock().expect("results lock")[i] = Some(r);
                    if failed {
                        next.store(chunks.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results.into_inner().expect("results lock").into_iter().flatten() {
            out.extend(r?);
        }
        if out.len() != texts.len() {
            return Err(Error::Protocol("batch aborted before all texts were embedded".into()));
        }
        Ok(out)
    }
}
