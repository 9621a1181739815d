use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::SamplingParams;
use crate::corpus::ContextKeywordPair;
use crate::text::{self, NormalizationProfile};

/// What a backend gets for one generation call.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub n_clues: usize,
    pub pair: &'a ContextKeywordPair,
    pub params: SamplingParams,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Transient: connection failures, timeouts, 429 and 5xx.
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// A text-generation service. Implementations must be usable from several
/// threads at once.
pub trait TextBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(10),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, ..Self::default() }
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let scaled = self.initial_delay.as_secs_f64() * self.factor.powi(attempt.saturating_sub(1) as i32);
        Duration::from_secs_f64(scaled.min(self.max_delay.as_secs_f64()))
    }
}

/// Spaces out calls so that no two start closer than `min_interval`.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        Self { min_interval, next_slot: Mutex::new(None) }
    }

    pub fn per_minute(requests: u32) -> Self {
        if requests == 0 {
            return Self::new(Duration::ZERO);
        }
        Self::new(Duration::from_secs_f64(60.0 / requests as f64))
    }

    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.min_interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Deterministic stand-in for a language model. The same (seed, pair)
/// always produces the same numbered list of clues, built from context
/// words that do not contain the answer.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    id: String,
}

const MOCK_PATTERNS: &[&str] = &[
    "مصطلح يرتبط في النص بكلمتي {a} و{b}",
    "من مفاهيم {cat} ويرد ذكره مع {a}",
    "اسم يقترن في هذا السياق بـ {a}",
    "كلمة من مجال {cat} لها صلة بـ {a} و{b}",
    "يتحدث النص عنه عند ذكر {a}",
    "مفهوم يرد قرب عبارة {a} {b}",
];

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed, id: "mock".to_string() }
    }

    fn rng_for(&self, pair: &ContextKeywordPair) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(pair.pair_id().as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl TextBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let pair = request.pair;
        let mut rng = self.rng_for(pair);
        let words: Vec<String> = text::normalize(&pair.context, NormalizationProfile::COUNTING)
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphabetic()).to_string())
            .filter(|w| text::count_letters(w) >= 3 && !w.starts_with('و'))
            .filter(|w| !text::contains_answer(w, &pair.keyword).unwrap_or(true))
            .fold(Vec::new(), |mut acc, w| {
                if !acc.contains(&w) {
                    acc.push(w);
                }
                acc
            });
        let category = if pair.category.trim().is_empty() { "المعرفة" } else { pair.category.trim() };
        let mut out = String::new();
        for i in 0..request.n_clues {
            let pattern = MOCK_PATTERNS.choose(&mut rng).copied().unwrap_or(MOCK_PATTERNS[0]);
            let (a, b) = match words.len() {
                0 => ("هذا الموضوع".to_string(), "سياقه".to_string()),
                1 => (words[0].clone(), "سياقه".to_string()),
                n => {
                    let a = rng.random_range(0..n);
                    let b = (a + rng.random_range(1..n)) % n;
                    (words[a].clone(), words[b].clone())
                }
            };
            let clue = pattern.replace("{a}", &a).replace("{b}", &b).replace("{cat}", category);
            let _ = writeln!(out, "{}. {}", i + 1, clue);
        }
        Ok(out)
    }
}

/// Client for a chat-completions style endpoint (`POST {base_url}/chat/completions`).
pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    token: Option<String>,
    limiter: RateLimiter,
    id: String,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, token: Option<String>, timeout: Duration, requests_per_minute: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            token,
            limiter: RateLimiter::per_minute(requests_per_minute),
            id: format!("http:{model}"),
        }
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self, ConfigError> {
        let base_url = config.base_url.clone().ok_or(ConfigError::Missing("backend.base_url"))?;
        let model = config.model.clone().ok_or(ConfigError::Missing("backend.model"))?;
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        Ok(Self::new(
            &base_url,
            &model,
            token,
            Duration::from_secs(config.timeout_secs),
            config.requests_per_minute,
        ))
    }
}

impl TextBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        self.limiter.acquire();
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "top_k": request.params.top_k,
            "max_tokens": request.params.max_output_tokens,
        });
        let mut req = self.agent.post(&format!("{}/chat/completions", self.base_url));
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = req.send_json(&body).map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Unavailable(format!("HTTP {status}"))),
            _ => return Err(BackendError::Rejected(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value}")]
    InvalidValue { key: String, value: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

/// Generation backend settings read from a plain `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub sampling: SamplingParams,
    pub seed: u64,
    pub timeout_secs: u64,
    pub requests_per_minute: u32,
    pub concurrency: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model: None,
            token_env: "BACKEND_TOKEN".into(),
            sampling: SamplingParams::default(),
            seed: 0,
            timeout_secs: 60,
            requests_per_minute: 0,
            concurrency: 4,
        }
    }
}

impl BackendConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let value = value.trim().trim_matches('"');
            entries.insert(key.trim().to_string(), value.to_string());
        }
        let mut config = Self::default();
        for (key, value) in entries {
            let invalid = || ConfigError::InvalidValue { key: key.clone(), value: value.clone() };
            match key.as_str() {
                "backend.kind" => {
                    config.kind = match value.as_str() {
                        "mock" => BackendKind::Mock,
                        "http" => BackendKind::Http,
                        _ => return Err(invalid()),
                    }
                }
                "backend.base_url" => config.base_url = Some(value.clone()),
                "backend.model" => config.model = Some(value.clone()),
                "backend.token_env" => config.token_env = value.clone(),
                "backend.seed" => config.seed = value.parse().map_err(|_| invalid())?,
                "backend.timeout_secs" => config.timeout_secs = value.parse().map_err(|_| invalid())?,
                "backend.requests_per_minute" => config.requests_per_minute = value.parse().map_err(|_| invalid())?,
                "backend.concurrency" => config.concurrency = value.parse().map_err(|_| invalid())?,
                "sampling.temperature" => config.sampling.temperature = value.parse().map_err(|_| invalid())?,
                "sampling.top_p" => config.sampling.top_p = value.parse().map_err(|_| invalid())?,
                "sampling.top_k" => config.sampling.top_k = value.parse().map_err(|_| invalid())?,
                "sampling.max_output_tokens" => {
                    config.sampling.max_output_tokens = value.parse().map_err(|_| invalid())?
                }
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        config
            .sampling
            .validate()
            .map_err(|value| ConfigError::InvalidValue { key: "sampling".into(), value })?;
        if config.kind == BackendKind::Http {
            if config.base_url.is_none() {
                return Err(ConfigError::Missing("backend.base_url"));
            }
            if config.model.is_none() {
                return Err(ConfigError::Missing("backend.model"));
            }
        }
        Ok(config)
    }
}
