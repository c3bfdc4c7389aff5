//! Chat-completion client.
//!
//! [`ModelClient`] wraps a [`Backend`] (HTTP or scripted mock) with bounded
//! concurrency, retries with jittered exponential backoff and an optional
//! on-disk response cache. It is cheap to clone and safe to share across
//! tasks.

mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::prompts::{self, PromptTemplate};

pub use cache::ResponseCache;
pub use http::HttpBackend;
pub use mock::{MockBackend, MockReply, MockRule, MockScript};

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 1024;
pub const DEFAULT_CONCURRENCY: usize = 8;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Number of independent trajectories per question.
    pub k: usize,
    pub max_new_tokens: u32,
    pub model_name: String,
    pub seed: Option<u64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            k: DEFAULT_K,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            model_name: "gpt-4o".to_string(),
            seed: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.k == 0 {
            return Err(ClientError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(ClientError::InvalidConfig(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        if self.model_name.trim().is_empty() {
            return Err(ClientError::InvalidConfig("model_name is empty".into()));
        }
        Ok(())
    }

    /// Same configuration at temperature zero, as used for evaluation and
    /// integration requests.
    pub fn greedy(&self) -> Self {
        Self {
            temperature: 0.0,
            k: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub config: SamplingConfig,
    /// Name of the template that produced the prompts. Not sent over the wire
    /// and not part of the cache key.
    pub prompt_name: String,
}

impl CompletionRequest {
    pub fn new(
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
        config: SamplingConfig,
    ) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            config,
            prompt_name: String::new(),
        }
    }

    pub fn from_template(template: &PromptTemplate, vars: &[(&str, &str)], config: SamplingConfig) -> Self {
        let (system, user) = template.render(vars);
        Self {
            prompt_name: template.name.to_string(),
            ..Self::new(system, user, config)
        }
    }

    /// SHA-256 over model, prompts, temperature, seed and token budget.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::json!({
            "model": self.config.model_name,
            "system": self.system_prompt,
            "user": self.user_prompt,
            "temperature": self.config.temperature,
            "seed": self.config.seed,
            "max_new_tokens": self.config.max_new_tokens,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    /// Only reproducible requests are cached: greedy or explicitly seeded.
    pub fn cacheable(&self) -> bool {
        self.config.temperature == 0.0 || self.config.seed.is_some()
    }

    fn validate(&self) -> Result<(), ClientError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(ClientError::InvalidConfig("prompts must be non-empty".into()));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub cached: bool,
    /// Backend attempts made; 1 for a cache hit.
    pub attempt_count: u32,
    pub latency: Duration,
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("authentication: {0}")]
    Auth(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::Malformed(_) | BackendError::Auth(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error("all {} samples failed", .0.len())]
    AllFailed(Vec<IndexedError>),
}

/// A sample that failed, keyed by its request index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedError {
    pub index: usize,
    pub error: String,
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn send(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    /// Relative jitter applied to each delay, e.g. 0.2 for ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            base_delay: Duration::from_secs(1),
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `base · 2^retry`,
    /// scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * 2f64.powi(retry.min(30) as i32);
        let factor = if self.jitter > 0.0 {
            1.0 + rand::random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((nominal * factor).max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub retry: RetryPolicy,
    /// Maximum simultaneous backend calls.
    pub concurrency: usize,
    pub cache: Option<ResponseCache>,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            concurrency: DEFAULT_CONCURRENCY,
            cache: None,
        }
    }
}

/// Request counters, exposed for instrumentation and tests.
#[derive(Debug, Default)]
pub struct ClientStats {
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl ClientStats {
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Texts returned by [`ModelClient::sample_trajectories`], in request-index
/// order, plus the indices that failed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trajectories {
    pub texts: Vec<(usize, String)>,
    /// Backend attempts behind each entry of `texts`, same order.
    pub attempts: Vec<u32>,
    pub errors: Vec<IndexedError>,
}

#[derive(Clone)]
pub struct ModelClient {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    limiter: Arc<Semaphore>,
    stats: Arc<ClientStats>,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient")
            .field("retry", &self.retry)
            .field("cache", &self.cache)
            .field("permits", &self.limiter.available_permits())
            .finish()
    }
}

impl ModelClient {
    pub fn new(backend: Arc<dyn Backend>, options: ClientOptions) -> Self {
        Self {
            backend,
            retry: options.retry,
            cache: options.cache,
            limiter: Arc::new(Semaphore::new(options.concurrency.max(1))),
            stats: Arc::new(ClientStats::default()),
        }
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    pub async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        request.validate()?;
        let started = Instant::now();
        let key = request.cache_key();
        let cache = self.cache.as_ref().filter(|_| request.cacheable());

        if let Some(cache) = cache {
            if let Some(text) = cache.get(&key).map_err(|e| ClientError::Cache(e.to_string()))? {
                self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(CompletionResult {
                    text,
                    cached: true,
                    attempt_count: 1,
                    latency: started.elapsed(),
                });
            }
        }

        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("semaphore never closed");
                self.stats.enter();
                let outcome = self.backend.send(request).await;
                self.stats.exit();
                outcome
            };
            match outcome {
                Ok(text) => {
                    if let Some(cache) = cache {
                        cache
                            .put(&key, &text)
                            .map_err(|e| ClientError::Cache(e.to_string()))?;
                    }
                    return Ok(CompletionResult {
                        text,
                        cached: false,
                        attempt_count: attempt,
                        latency: started.elapsed(),
                    });
                }
                Err(BackendError::Auth(msg)) => return Err(ClientError::Auth(msg)),
                Err(BackendError::Status { status: 401 | 403, body }) => {
                    return Err(ClientError::Auth(body))
                }
                Err(BackendError::Malformed(msg)) => return Err(ClientError::Protocol(msg)),
                Err(err) if err.is_transient() => {
                    if attempt >= max_attempts {
                        return Err(ClientError::TransportExhausted {
                            attempts: attempt,
                            last: err.to_string(),
                        });
                    }
                    let delay = self.retry.delay(attempt - 1);
                    tracing::debug!(attempt, ?delay, error = %err, "retrying completion");
                    tokio::time::sleep(delay).await;
                }
                Err(BackendError::Status { status, body }) => {
                    return Err(ClientError::Rejected { status, body })
                }
                Err(err) => return Err(ClientError::Protocol(err.to_string())),
            }
        }
    }

    /// Issues `config.k` independent completions of the candidate-graph
    /// prompt. With a seed, sample `i` uses `seed + i` so every sample is
    /// distinct and cacheable.
    pub async fn sample_trajectories(
        &self,
        question: &str,
        config: &SamplingConfig,
        prompt: &PromptTemplate,
    ) -> Result<Trajectories, ClientError> {
        config.validate()?;
        let requests: Vec<CompletionRequest> = (0..config.k)
            .map(|i| {
                let config = SamplingConfig {
                    seed: config.seed.map(|s| s.wrapping_add(i as u64)),
                    ..config.clone()
                };
                CompletionRequest::from_template(
                    prompt,
                    &[("question", question), ("format", prompts::format_rules())],
                    config,
                )
            })
            .collect();
        let outcomes = futures::future::join_all(requests.iter().map(|r| self.complete(r))).await;

        let mut trajectories = Trajectories::default();
        for (index, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(result) => {
                    trajectories.attempts.push(result.attempt_count);
                    trajectories.texts.push((index, result.text));
                }
                // not per-sample failures: every other sample would hit them too
                Err(err @ (ClientError::Auth(_) | ClientError::InvalidConfig(_))) => return Err(err),
                Err(err) => trajectories.errors.push(IndexedError {
                    index,
                    error: err.to_string(),
                }),
            }
        }
        if trajectories.texts.is_empty() {
            return Err(ClientError::AllFailed(trajectories.errors));
        }
        Ok(trajectories)
    }
}
