//! Batch completion collection from a chat-completions compatible endpoint.
//!
//! Every prompt is looked up in a content-addressed disk cache first. Misses
//! go out over HTTP with at most `max_in_flight` concurrent requests. Rate
//! limits (429) and server errors (5xx) are retried with exponential
//! backoff, or after the server's `Retry-After` delay when one is given.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parse_eval::ModelOutput;
use crate::trace::SftRecord;

pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InferError {
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("endpoint unreachable; {} record(s) not collected: {}", uncollected.len(), uncollected.join(", "))]
    Unreachable { uncollected: Vec<String> },
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            temperature: 0.0,
            max_new_tokens: 256,
            request_timeout_secs: 60,
            max_in_flight: 4,
            max_retries: 3,
            backoff_base_ms: 500,
        }
    }

    /// Reads the API key from `var`; a missing variable leaves it unset.
    pub fn with_api_key_from_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn validate(&self) -> Result<(), InferError> {
        let bad = |m: &str| Err(InferError::InvalidConfig(m.to_string()));
        if self.max_in_flight < 1 {
            return bad("max_in_flight must be at least 1");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return bad("base_url and model_name are required");
        }
        Ok(())
    }

    pub fn endpoint_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body of `POST /v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user(config: &EndpointConfig, prompt: &str) -> Self {
        ChatRequest {
            model: config.model_name.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: config.temperature,
            max_tokens: config.max_new_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

/// Connection-level failure: nothing usable came back from the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

pub trait Transport: Sync {
    fn post(&self, request: &ChatRequest) -> Result<HttpReply, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.request_timeout_secs)))
            .build()
            .into();
        HttpTransport { agent, url: config.endpoint_url(), api_key: config.api_key.clone() }
    }
}

impl Transport for HttpTransport {
    fn post(&self, request: &ChatRequest) -> Result<HttpReply, TransportError> {
        let body = serde_json::to_string(request).map_err(|e| TransportError(e.to_string()))?;
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(&body).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, retry_after, body })
    }
}

/// Stable cache key: SHA-256 of the JSON object
/// `{"model","prompt","temperature","max_new_tokens"}`, hex encoded.
pub fn cache_key(model: &str, prompt: &str, temperature: f64, max_new_tokens: u32) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model: &'a str,
        prompt: &'a str,
        temperature: f64,
        max_new_tokens: u32,
    }
    let material =
        serde_json::to_vec(&KeyMaterial { model, prompt, temperature, max_new_tokens }).expect("serializable");
    hex::encode(Sha256::digest(&material))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub completion: String,
    pub response: Value,
    pub created_unix: u64,
}

/// One JSON file per key under `dir`.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, InferError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| InferError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Cache { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str::<CacheEntry>(&text).ok().filter(|e| e.key == key)
    }

    /// Write-then-rename so readers never see a partial entry.
    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        static SEQ: AtomicUsize = AtomicUsize::new(0);
        let tmp =
            self.dir.join(format!(".{}.{}.{}.tmp", entry.key, std::process::id(), SEQ.fetch_add(1, Ordering::Relaxed)));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(entry)?.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, self.path(&entry.key))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed { completion: String, cached: bool },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collected {
    pub id: String,
    pub attempts: u32,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectReport {
    /// One item per input record, in input order.
    pub items: Vec<Collected>,
    pub network_calls: usize,
}

impl CollectReport {
    pub fn completions(&self) -> Vec<ModelOutput> {
        self.items
            .iter()
            .filter_map(|c| match &c.outcome {
                Outcome::Completed { completion, .. } => {
                    Some(ModelOutput { id: c.id.clone(), completion: completion.clone() })
                }
                Outcome::Failed { .. } => None,
            })
            .collect()
    }

    pub fn failures(&self) -> Vec<&Collected> {
        self.items.iter().filter(|c| matches!(c.outcome, Outcome::Failed { .. })).collect()
    }
}

fn parse_completion(body: &str) -> Result<(String, Value), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("malformed response body: {e}"))?;
    let choice = v.get("choices").and_then(|c| c.get(0)).ok_or("malformed response body: no choices[0]")?;
    let content = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or("malformed response body: no choices[0].message.content")?;
    let meta = serde_json::json!({
        "id": v.get("id").cloned().unwrap_or(Value::Null),
        "finish_reason": choice.get("finish_reason").cloned().unwrap_or(Value::Null),
        "usage": v.get("usage").cloned().unwrap_or(Value::Null),
    });
    Ok((content.to_string(), meta))
}

fn backoff(config: &EndpointConfig, retry: u32) -> Duration {
    let base = config.backoff_base_ms.saturating_mul(1u64 << retry.min(20));
    let jitter = rand::rng().random_range(0.0..0.25);
    Duration::from_millis(base).mul_f64(1.0 + jitter)
}

enum Attempted {
    Done(Outcome),
    Unreachable(String),
}

struct Ctx<'a> {
    config: &'a EndpointConfig,
    cache: &'a Cache,
    transport: &'a dyn Transport,
    network_calls: AtomicUsize,
    abort: AtomicBool,
}

fn fetch(ctx: &Ctx<'_>, record: &SftRecord, attempts: &mut u32) -> Attempted {
    let cfg = ctx.config;
    let key = cache_key(&cfg.model_name, &record.prompt, cfg.temperature, cfg.max_new_tokens);
    if let Some(hit) = ctx.cache.get(&key) {
        return Attempted::Done(Outcome::Completed { completion: hit.completion, cached: true });
    }
    let request = ChatRequest::user(cfg, &record.prompt);
    let mut retry = 0u32;
    loop {
        *attempts += 1;
        ctx.network_calls.fetch_add(1, Ordering::SeqCst);
        let result = ctx.transport.post(&request);
        let (reason, wait) = match result {
            Ok(reply) if (200..300).contains(&reply.status) => {
                return Attempted::Done(match parse_completion(&reply.body) {
                    Ok((completion, response)) => {
                        let entry = CacheEntry {
                            key: key.clone(),
                            model: cfg.model_name.clone(),
                            completion: completion.clone(),
                            response,
                            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                        };
                        if let Err(e) = ctx.cache.put(&entry) {
                            warn!("{}: cache write failed: {e}", record.id);
                        }
                        Outcome::Completed { completion, cached: false }
                    }
                    Err(reason) => Outcome::Failed { reason },
                });
            }
            Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                let wait = reply.retry_after.unwrap_or_else(|| backoff(cfg, retry));
                (format!("HTTP {}", reply.status), Some(wait))
            }
            Ok(reply) => {
                return Attempted::Done(Outcome::Failed { reason: format!("HTTP {}: {}", reply.status, reply.body) });
            }
            Err(TransportError(msg)) => {
                if retry >= cfg.max_retries {
                    return Attempted::Unreachable(msg);
                }
                (msg, None)
            }
        };
        if retry >= cfg.max_retries {
            return Attempted::Done(Outcome::Failed { reason: format!("{reason} after {} attempt(s)", *attempts) });
        }
        let wait = wait.unwrap_or_else(|| backoff(cfg, retry));
        warn!("{}: attempt {} failed ({reason}); retrying in {:?}", record.id, *attempts, wait);
        std::thread::sleep(wait);
        retry += 1;
    }
}

/// Collects over HTTP using [`HttpTransport`].
pub fn collect(records: &[SftRecord], config: &EndpointConfig, cache_dir: &Path) -> Result<CollectReport, InferError> {
    config.validate()?;
    let cache = Cache::open(cache_dir)?;
    collect_with(records, config, &cache, &HttpTransport::new(config))
}

/// Collects one completion per record through `transport`.
///
/// An exhausted connection-level failure stops the batch: outstanding
/// requests finish, no new ones start, and the error lists every record
/// without a completion. Completions gathered so far stay in the cache.
pub fn collect_with(
    records: &[SftRecord],
    config: &EndpointConfig,
    cache: &Cache,
    transport: &dyn Transport,
) -> Result<CollectReport, InferError> {
    config.validate()?;
    let ctx = Ctx { config, cache, transport, network_calls: AtomicUsize::new(0), abort: AtomicBool::new(false) };
    let slots: Vec<Mutex<Option<Collected>>> = records.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.min(records.len()).max(1);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if ctx.abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let mut attempts = 0;
                let outcome = match fetch(&ctx, record, &mut attempts) {
                    Attempted::Done(o) => o,
                    Attempted::Unreachable(msg) => {
                        warn!("{}: endpoint unreachable after {attempts} attempt(s): {msg}", record.id);
                        ctx.abort.store(true, Ordering::SeqCst);
                        Outcome::Failed { reason: format!("unreachable: {msg}") }
                    }
                };
                debug!("{}: {:?} after {attempts} attempt(s)", record.id, outcome);
                *slots[i].lock().unwrap() = Some(Collected { id: record.id.clone(), attempts, outcome });
            });
        }
    });

    if ctx.abort.load(Ordering::SeqCst) {
        let uncollected = records
            .iter()
            .zip(&slots)
            .filter(|(_, slot)| {
                !matches!(&*slot.lock().unwrap(), Some(Collected { outcome: Outcome::Completed { .. }, .. }))
            })
            .map(|(r, _)| r.id.clone())
            .collect();
        return Err(InferError::Unreachable { uncollected });
    }

    let items = slots.into_iter().map(|m| m.into_inner().unwrap().expect("every record visited")).collect();
    Ok(CollectReport { items, network_calls: ctx.network_calls.load(Ordering::SeqCst) })
}
