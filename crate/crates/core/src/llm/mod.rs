//! Chat-completion driving: retries with backoff, bounded parallel batches
//! and a usage ledger.

#[cfg(feature = "http")]
pub mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instruction::Kind;
use crate::prompt::GenerationRequest;

pub use mock::{mock_complete, mock_reply, MockBackend};

pub const API_KEY_ENV: &str = "EMOFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_name: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// First retry delay; doubles per retry, scaled by a jitter in [0.5, 1).
    pub base_backoff: Duration,
    pub temperature: f64,
    pub timeout: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            max_in_flight: 4,
            max_retries: 3,
            base_backoff: Duration::from_secs(1),
            temperature: 0.2,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_in_flight must be at least 1")]
    MaxInFlight,
    #[error("base_backoff must be positive")]
    Backoff,
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("endpoint must be an http(s) URL, got {0:?}")]
    Endpoint(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_in_flight == 0 {
            return Err(ConfigError::MaxInFlight);
        }
        if self.base_backoff.is_zero() {
            return Err(ConfigError::Backoff);
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(ConfigError::Endpoint(self.endpoint.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Auth,
    RateLimit,
    Timeout,
    Transport,
    Server,
    Rejected,
    Malformed,
}

impl ErrorClass {
    pub fn is_retryable(self) -> bool {
        matches!(self, ErrorClass::RateLimit | ErrorClass::Timeout | ErrorClass::Transport | ErrorClass::Server)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Auth => "auth",
            ErrorClass::RateLimit => "rate_limit",
            ErrorClass::Timeout => "timeout",
            ErrorClass::Transport => "transport",
            ErrorClass::Server => "server",
            ErrorClass::Rejected => "rejected",
            ErrorClass::Malformed => "malformed",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Failure of a single attempt, as reported by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError {
    pub class: ErrorClass,
    pub message: String,
    /// Server-requested wait before the next attempt.
    pub retry_after: Option<Duration>,
}

impl BackendError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        BackendError { class, message: message.into(), retry_after: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// One chat-completion round trip. Implementations must be shareable across
/// the batch worker threads.
pub trait Backend: Send + Sync {
    fn send(&self, request: &GenerationRequest, config: &BackendConfig) -> Result<BackendReply, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn send(&self, request: &GenerationRequest, config: &BackendConfig) -> Result<BackendReply, BackendError> {
        (**self).send(request, config)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn send(&self, request: &GenerationRequest, config: &BackendConfig) -> Result<BackendReply, BackendError> {
        (**self).send(request, config)
    }
}

/// Terminal failure of [`LlmClient::complete`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{image_id}: {class} failure after {attempts} attempt(s): {message}")]
pub struct CompletionError {
    pub image_id: String,
    pub class: ErrorClass,
    pub attempts: u32,
    pub message: String,
}

/// One successful completion; the completions log holds these, one per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub image_id: String,
    pub kind: Kind,
    pub raw_text: String,
    pub prompt_hash: String,
    pub model_name: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub request_count: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub failures_by_class: BTreeMap<ErrorClass, u64>,
}

impl UsageLedger {
    fn record(&mut self, outcome: &Result<BackendReply, BackendError>) {
        self.request_count += 1;
        match outcome {
            Ok(r) => {
                self.prompt_tokens += r.prompt_tokens.unwrap_or(0);
                self.completion_tokens += r.completion_tokens.unwrap_or(0);
            }
            Err(e) => *self.failures_by_class.entry(e.class).or_default() += 1,
        }
    }

    pub fn failures(&self, class: ErrorClass) -> u64 {
        self.failures_by_class.get(&class).copied().unwrap_or(0)
    }
}

pub fn now_rfc3339() -> String {
    let since = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    chrono::DateTime::from_timestamp(since.as_secs() as i64, since.subsec_nanos())
        .unwrap_or_default()
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

type Clock = fn() -> String;

pub struct LlmClient<B> {
    backend: B,
    config: BackendConfig,
    ledger: Mutex<UsageLedger>,
    clock: Clock,
}

impl<B: Backend> LlmClient<B> {
    pub fn new(backend: B, config: BackendConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(LlmClient { backend, config, ledger: Mutex::new(UsageLedger::default()), clock: now_rfc3339 })
    }

    /// Replaces the timestamp source.
    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn ledger(&self) -> UsageLedger {
        self.ledger.lock().unwrap().clone()
    }

    fn backoff(&self, request: &GenerationRequest, retry: u32) -> Duration {
        let mut seed = [0u8; 32];
        let hash = request.prompt_hash.as_bytes();
        seed[..hash.len().min(28)].copy_from_slice(&hash[..hash.len().min(28)]);
        seed[28..].copy_from_slice(&retry.to_le_bytes());
        let jitter: f64 = ChaCha8Rng::from_seed(seed).random_range(0.5..1.0);
        self.config.base_backoff.mul_f64(2f64.powi(retry.min(10) as i32) * jitter)
    }

    /// Sends `request`, retrying retryable failures up to `max_retries`
    /// times. The ledger records every attempt.
    pub fn complete(&self, request: &GenerationRequest) -> Result<CompletionResult, CompletionError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = self.backend.send(request, &self.config);
            self.ledger.lock().unwrap().record(&outcome);
            match outcome {
                Ok(reply) => {
                    return Ok(CompletionResult {
                        image_id: request.image_id.clone(),
                        kind: request.kind,
                        raw_text: reply.text,
                        prompt_hash: request.prompt_hash.clone(),
                        model_name: self.config.model_name.clone(),
                        timestamp: (self.clock)(),
                    })
                }
                Err(e) if e.class.is_retryable() && attempts <= self.config.max_retries => {
                    let wait = self.backoff(request, attempts - 1).max(e.retry_after.unwrap_or_default());
                    thread::sleep(wait);
                }
                Err(e) => {
                    return Err(CompletionError {
                        image_id: request.image_id.clone(),
                        class: e.class,
                        attempts,
                        message: e.message,
                    })
                }
            }
        }
    }

    /// Completes every request with at most `max_in_flight` outstanding.
    /// Output order equals input order.
    pub fn complete_batch(&self, requests: &[GenerationRequest]) -> Vec<Result<CompletionResult, CompletionError>> {
        self.complete_batch_with(requests, |_, _| {})
    }

    /// Like [`complete_batch`](Self::complete_batch); `on_done` sees each
    /// result (with its input index) as soon as it is available. Calls to
    /// `on_done` are serialized.
    pub fn complete_batch_with<F>(
        &self,
        requests: &[GenerationRequest],
        on_done: F,
    ) -> Vec<Result<CompletionResult, CompletionError>>
    where
        F: Fn(usize, &Result<CompletionResult, CompletionError>) + Send + Sync,
    {
        let n = requests.len();
        let slots: Vec<OnceLock<Result<CompletionResult, CompletionError>>> = (0..n).map(|_| OnceLock::new()).collect();
        let next = AtomicUsize::new(0);
        let callback = Mutex::new(on_done);
        let workers = self.config.max_in_flight.min(n);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    (callback.lock().unwrap())(i, &result);
                    let _ = slots[i].set(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("every slot filled"))
            .collect()
    }
}
