//! Provider gateway.
//!
//! All chat and embedding traffic goes through [`Gateway`], which resolves a
//! provider by id, consults the content-addressed [`ResponseCache`], retries
//! transport failures with exponential backoff and collapses concurrent
//! identical requests into a single provider call.
//!
//! Providers are plain trait objects:
//! - [`http`] speaks the common chat-completions / embeddings JSON shape
//! - [`mock`] answers from a script (tests, golden runs)
//! - [`replay`] answers from a recorded run manifest
//! - [`mock::HashingEmbedder`] is an offline bag-of-words embedder

pub mod cache;
pub mod config;
pub mod http;
pub mod mock;
pub mod replay;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheRecord, ResponseCache};

/// Pipeline stage a chat request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Aspect,
    Acu,
    Reorder,
    Paragraph,
    Evaluate,
    Vanilla,
    AspectMetric,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Aspect => "aspect",
            Tag::Acu => "acu",
            Tag::Reorder => "reorder",
            Tag::Paragraph => "paragraph",
            Tag::Evaluate => "evaluate",
            Tag::Vanilla => "vanilla",
            Tag::AspectMetric => "aspect_metric",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: Option<String>,
    pub user_prompt: String,
    /// Empty means "the provider's configured model".
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub tag: Tag,
    /// Distinguishes repeated proposals that share a prompt (ToT branches,
    /// retries). Part of the cache key when present; never sent upstream.
    pub variant: Option<String>,
}

impl ChatRequest {
    pub fn new(tag: Tag, system_prompt: Option<String>, user_prompt: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt,
            user_prompt: user_prompt.into(),
            model_id: String::new(),
            temperature: 0.0,
            max_output_tokens: None,
            tag,
            variant: None,
        }
    }

    pub fn with_variant(mut self, variant: impl Into<String>) -> Self {
        self.variant = Some(variant.into());
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// System and user prompt joined, for substring matching.
    pub fn full_prompt(&self) -> String {
        match &self.system_prompt {
            Some(s) => format!("{s}\n{}", self.user_prompt),
            None => self.user_prompt.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub provider_id: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub cached: bool,
    pub key: CacheKey,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One embedded input as returned by [`Gateway::embed`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedText {
    pub vector: EmbeddingVector,
    pub key: CacheKey,
    pub cached: bool,
}

/// Hex SHA-256 over a canonical JSON encoding of the request identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

#[derive(Serialize)]
struct ChatKeyMaterial<'a> {
    kind: &'static str,
    provider_id: &'a str,
    model_id: &'a str,
    temperature: f64,
    system_prompt: Option<&'a str>,
    user_prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<&'a str>,
}

#[derive(Serialize)]
struct EmbedKeyMaterial<'a> {
    kind: &'static str,
    provider_id: &'a str,
    model_id: &'a str,
    input_text: &'a str,
}

impl CacheKey {
    fn digest(material: &impl Serialize) -> CacheKey {
        let bytes = serde_json::to_vec(material).expect("key material serializes");
        CacheKey(hex::encode(Sha256::digest(&bytes)))
    }

    /// Key for a chat request routed to `provider_id` with the resolved `model_id`.
    pub fn chat(provider_id: &str, model_id: &str, req: &ChatRequest) -> CacheKey {
        Self::digest(&ChatKeyMaterial {
            kind: "chat",
            provider_id,
            model_id,
            temperature: req.temperature,
            system_prompt: req.system_prompt.as_deref(),
            user_prompt: &req.user_prompt,
            variant: req.variant.as_deref(),
        })
    }

    pub fn embedding(provider_id: &str, model_id: &str, input_text: &str) -> CacheKey {
        Self::digest(&EmbedKeyMaterial {
            kind: "embedding",
            provider_id,
            model_id,
            input_text,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw provider output before gateway bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub truncated: bool,
}

impl Completion {
    pub fn instant(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            latency_ms: 0,
            truncated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub vectors: Vec<Vec<f32>>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Network failure, timeout, 5xx or 429. Retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// Non-retriable 4xx.
    #[error("provider rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("no scripted response for request tagged {tag}")]
    ScriptGap { tag: String },
    #[error("provider contract violated: {0}")]
    Contract(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model_id(&self) -> &str;
    /// Whether calls leave the process.
    fn is_network(&self) -> bool {
        false
    }
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn is_network(&self) -> bool {
        false
    }
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError>;
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("provider {0:?} is not configured")]
    UnknownProvider(String),
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("provider {provider} rejected the request (HTTP {status}): {message}")]
    Rejected {
        provider: String,
        status: u16,
        message: String,
    },
    #[error("provider {provider} returned an empty completion for tag {tag}")]
    EmptyResponse { provider: String, tag: Tag },
    #[error("scripted provider has no response for tag={tag}")]
    ScriptGap { tag: String },
    #[error("provider contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("response cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    /// Errors that indicate bad configuration rather than a failed run.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            GatewayError::UnknownProvider(_) | GatewayError::Rejected { .. } | GatewayError::Config(_)
        )
    }

    fn from_provider(provider: &str, err: ProviderError, attempts: u32) -> Self {
        match err {
            ProviderError::Transport(last) => GatewayError::Transport { attempts, last },
            ProviderError::Rejected { status, message } => GatewayError::Rejected {
                provider: provider.to_string(),
                status,
                message,
            },
            ProviderError::ScriptGap { tag } => GatewayError::ScriptGap { tag },
            ProviderError::Contract(m) => GatewayError::Contract(m),
            ProviderError::Config(m) => GatewayError::Config(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    fn run<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, (ProviderError, u32)> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(ProviderError::Transport(_)) if attempt < max => {
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}

type FlightResult = Result<Completion, GatewayError>;

#[derive(Default)]
struct Flight {
    result: Mutex<Option<FlightResult>>,
    done: Condvar,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct GatewayStats {
    /// Calls that reached a provider implementation (attempts included).
    pub provider_calls: usize,
    /// Subset of `provider_calls` that went over the network.
    pub network_calls: usize,
    pub cache_hits: usize,
}

#[derive(Default)]
struct Counters {
    provider_calls: AtomicUsize,
    network_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

pub struct Gateway {
    chat: HashMap<String, Arc<dyn ChatProvider>>,
    embed: HashMap<String, Arc<dyn EmbeddingProvider>>,
    cache: ResponseCache,
    retry: RetryPolicy,
    inflight: Mutex<HashMap<CacheKey, Arc<Flight>>>,
    counters: Counters,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut chat: Vec<_> = self.chat.keys().collect();
        chat.sort();
        let mut embed: Vec<_> = self.embed.keys().collect();
        embed.sort();
        f.debug_struct("Gateway")
            .field("chat", &chat)
            .field("embed", &embed)
            .field("retry", &self.retry)
            .finish()
    }
}

#[derive(Default)]
pub struct GatewayBuilder {
    chat: HashMap<String, Arc<dyn ChatProvider>>,
    embed: HashMap<String, Arc<dyn EmbeddingProvider>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl GatewayBuilder {
    pub fn chat(mut self, provider: Arc<dyn ChatProvider>) -> Self {
        self.chat.insert(provider.id().to_string(), provider);
        self
    }

    pub fn embedding(mut self, provider: Arc<dyn EmbeddingProvider>) -> Self {
        self.embed.insert(provider.id().to_string(), provider);
        self
    }

    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            chat: self.chat,
            embed: self.embed,
            cache: self.cache.unwrap_or_else(ResponseCache::in_memory),
            retry: self.retry,
            inflight: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    pub fn has_chat(&self, id: &str) -> bool {
        self.chat.contains_key(id)
    }

    pub fn has_embedding(&self, id: &str) -> bool {
        self.embed.contains_key(id)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            provider_calls: self.counters.provider_calls.load(Ordering::SeqCst),
            network_calls: self.counters.network_calls.load(Ordering::SeqCst),
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
        }
    }

    pub fn chat_model(&self, provider_id: &str) -> Result<String, GatewayError> {
        self.chat
            .get(provider_id)
            .map(|p| p.model_id().to_string())
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_string()))
    }

    pub fn complete(&self, provider_id: &str, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let provider = self
            .chat
            .get(provider_id)
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_string()))?;
        let model_id = if req.model_id.is_empty() {
            provider.model_id().to_string()
        } else {
            req.model_id.clone()
        };
        let key = CacheKey::chat(provider_id, &model_id, req);
        let respond = |c: Completion, cached: bool| ChatResponse {
            text: c.text,
            provider_id: provider_id.to_string(),
            model_id: model_id.clone(),
            latency_ms: if cached { 0 } else { c.latency_ms },
            cached,
            key: key.clone(),
            truncated: c.truncated,
        };

        if let Some(record) = self.cache.get(&key)? {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(respond(Completion::instant(record.response_text), true));
        }

        let (flight, leader) = {
            let mut map = self.inflight.lock().expect("inflight lock");
            match map.get(&key) {
                Some(f) => (Arc::clone(f), false),
                None => {
                    let f = Arc::new(Flight::default());
                    map.insert(key.clone(), Arc::clone(&f));
                    (f, true)
                }
            }
        };

        if !leader {
            let mut slot = flight.result.lock().expect("flight lock");
            while slot.is_none() {
                slot = flight.done.wait(slot).expect("flight wait");
            }
            let result = slot.clone().expect("flight resolved");
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return result.map(|c| respond(c, true));
        }

        let result = self.call_chat(provider.as_ref(), &model_id, req, &key);
        {
            let mut slot = flight.result.lock().expect("flight lock");
            *slot = Some(result.clone());
            flight.done.notify_all();
        }
        self.inflight.lock().expect("inflight lock").remove(&key);
        result.map(|c| respond(c, false))
    }

    fn call_chat(
        &self,
        provider: &dyn ChatProvider,
        model_id: &str,
        req: &ChatRequest,
        key: &CacheKey,
    ) -> Result<Completion, GatewayError> {
        let completion = self
            .retry
            .run(|| {
                self.count_call(provider.is_network());
                provider.complete(req)
            })
            .map_err(|(e, attempts)| GatewayError::from_provider(provider.id(), e, attempts))?;
        if completion.text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse {
                provider: provider.id().to_string(),
                tag: req.tag,
            });
        }
        let record = CacheRecord::for_chat(key, provider.id(), model_id, req, &completion.text);
        self.cache.put(record)?;
        Ok(completion)
    }

    fn count_call(&self, network: bool) {
        self.counters.provider_calls.fetch_add(1, Ordering::SeqCst);
        if network {
            self.counters.network_calls.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Embed `texts`, one vector per input in order. Cached per text.
    pub fn embed(&self, provider_id: &str, texts: &[String]) -> Result<Vec<EmbeddedText>, GatewayError> {
        let provider = self
            .embed
            .get(provider_id)
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_string()))?;
        if texts.is_empty() {
            return Err(GatewayError::Contract("embedding batch is empty".into()));
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::Contract("embedding input text is empty".into()));
        }
        let model_id = provider.model_id().to_string();
        let keys: Vec<CacheKey> = texts
            .iter()
            .map(|t| CacheKey::embedding(provider_id, &model_id, t))
            .collect();

        let mut found: HashMap<CacheKey, (Vec<f32>, bool)> = HashMap::new();
        let mut missing: Vec<(CacheKey, String)> = Vec::new();
        for (key, text) in keys.iter().zip(texts) {
            if found.contains_key(key) || missing.iter().any(|(k, _)| k == key) {
                continue;
            }
            match self.cache.get(key)? {
                Some(record) => {
                    let values: Vec<f32> = serde_json::from_str(&record.response_text)
                        .map_err(|e| GatewayError::Cache(format!("corrupt embedding record {key}: {e}")))?;
                    self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                    found.insert(key.clone(), (values, true));
                }
                None => missing.push((key.clone(), text.clone())),
            }
        }

        if !missing.is_empty() {
            let batch_texts: Vec<String> = missing.iter().map(|(_, t)| t.clone()).collect();
            let batch = self
                .retry
                .run(|| {
                    self.count_call(provider.is_network());
                    provider.embed(&batch_texts)
                })
                .map_err(|(e, attempts)| GatewayError::from_provider(provider_id, e, attempts))?;
            if batch.vectors.len() != batch_texts.len() {
                return Err(GatewayError::Contract(format!(
                    "expected {} embeddings, provider returned {}",
                    batch_texts.len(),
                    batch.vectors.len()
                )));
            }
            for ((key, text), values) in missing.into_iter().zip(batch.vectors) {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(GatewayError::Contract(format!("non-finite embedding for {text:?}")));
                }
                let record = CacheRecord::for_embedding(&key, provider_id, &model_id, &text, &values);
                self.cache.put(record)?;
                found.insert(key, (values, false));
            }
        }

        let dim = found.values().next().map(|(v, _)| v.len()).unwrap_or(0);
        if dim == 0 || found.values().any(|(v, _)| v.len() != dim) {
            return Err(GatewayError::Contract(format!(
                "embedding dimensions differ within a batch for provider {provider_id}"
            )));
        }

        let mut seen_in_batch = std::collections::HashSet::new();
        Ok(keys
            .into_iter()
            .map(|key| {
                let (values, cached) = &found[&key];
                let cached = *cached || !seen_in_batch.insert(key.clone());
                EmbeddedText {
                    vector: EmbeddingVector {
                        values: values.clone(),
                        model_id: model_id.clone(),
                    },
                    key,
                    cached,
                }
            })
            .collect())
    }
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::mock::{Matcher, MockChat, MockEmbedder, Rule};
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn aspect_req() -> ChatRequest {
        ChatRequest::new(Tag::Aspect, None, "Extract the unique aspects of this")
    }

    fn gateway_with(rules: Vec<Rule>) -> Gateway {
        let mock = MockChat::new("mock", "mock-1", rules).unwrap();
        Gateway::builder().chat(Arc::new(mock)).build()
    }

    #[test]
    fn scripted_echo_then_cache_hit() {
        let gw = gateway_with(vec![Rule::new(
            Matcher::contains("Extract the unique aspects"),
            "Aspect 1\nAspect 2",
        )]);
        let first = gw.complete("mock", &aspect_req()).unwrap();
        assert_eq!(first.text, "Aspect 1\nAspect 2");
        assert!(!first.cached);
        let second = gw.complete("mock", &aspect_req()).unwrap();
        assert!(second.cached);
        assert_eq!(second.text, first.text);
        assert_eq!(gw.stats().provider_calls, 1);
        assert_eq!(gw.cache().writes(), 1);
    }

    #[test]
    fn digest_matcher() {
        let req = aspect_req();
        let key = CacheKey::chat("mock", "mock-1", &req);
        let gw = gateway_with(vec![Rule::new(Matcher::Digest(key.0.clone()), "by digest")]);
        assert_eq!(gw.complete("mock", &req).unwrap().text, "by digest");
    }

    #[test]
    fn unknown_provider_is_configuration_error() {
        let gw = gateway_with(vec![]);
        let err = gw.complete("nope", &aspect_req()).unwrap_err();
        assert_eq!(err, GatewayError::UnknownProvider("nope".into()));
        assert!(err.is_configuration());
    }

    #[test]
    fn empty_completion_is_error_and_not_cached() {
        let gw = gateway_with(vec![Rule::new(Matcher::any(), "   ")]);
        let err = gw.complete("mock", &aspect_req()).unwrap_err();
        assert!(matches!(err, GatewayError::EmptyResponse { tag: Tag::Aspect, .. }));
        assert_eq!(gw.cache().writes(), 0);
    }

    #[test]
    fn variant_and_temperature_change_the_key() {
        let base = aspect_req();
        let k0 = CacheKey::chat("p", "m", &base);
        assert_eq!(k0, CacheKey::chat("p", "m", &base.clone()));
        assert_ne!(k0, CacheKey::chat("p", "m", &base.clone().with_variant("s1")));
        assert_ne!(k0, CacheKey::chat("p", "m", &base.clone().with_temperature(0.7)));
        assert_ne!(k0, CacheKey::chat("q", "m", &base));
        assert_eq!(k0.0.len(), 64);
    }

    struct Flaky {
        failures_left: AtomicU32,
        calls: AtomicU32,
        status: Option<u16>,
    }

    impl ChatProvider for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn model_id(&self) -> &str {
            "m"
        }
        fn complete(&self, _req: &ChatRequest) -> Result<Completion, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if let Some(status) = self.status {
                return Err(ProviderError::Rejected {
                    status,
                    message: "bad key".into(),
                });
            }
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(ProviderError::Transport("connection reset".into()));
            }
            Ok(Completion::instant("ok"))
        }
    }

    fn fast_retry(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        }
    }

    #[test]
    fn transport_errors_are_retried_and_cached_once() {
        let flaky = Arc::new(Flaky {
            failures_left: AtomicU32::new(2),
            calls: AtomicU32::new(0),
            status: None,
        });
        let gw = Gateway::builder().chat(flaky.clone()).retry(fast_retry(3)).build();
        assert_eq!(gw.complete("flaky", &aspect_req()).unwrap().text, "ok");
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
        assert_eq!(gw.cache().writes(), 1);
    }

    #[test]
    fn retries_are_bounded() {
        let flaky = Arc::new(Flaky {
            failures_left: AtomicU32::new(10),
            calls: AtomicU32::new(0),
            status: None,
        });
        let gw = Gateway::builder().chat(flaky.clone()).retry(fast_retry(3)).build();
        let err = gw.complete("flaky", &aspect_req()).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }));
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_fatal_without_retry() {
        let flaky = Arc::new(Flaky {
            failures_left: AtomicU32::new(0),
            calls: AtomicU32::new(0),
            status: Some(401),
        });
        let gw = Gateway::builder().chat(flaky.clone()).retry(fast_retry(3)).build();
        let err = gw.complete("flaky", &aspect_req()).unwrap_err();
        assert!(err.is_configuration());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    struct Slow {
        calls: AtomicU32,
    }

    impl ChatProvider for Slow {
        fn id(&self) -> &str {
            "slow"
        }
        fn model_id(&self) -> &str {
            "m"
        }
        fn complete(&self, _req: &ChatRequest) -> Result<Completion, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(100));
            Ok(Completion::instant("slow answer"))
        }
    }

    #[test]
    fn concurrent_identical_requests_share_one_call() {
        let slow = Arc::new(Slow {
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::builder().chat(slow.clone()).build();
        let req = aspect_req();
        let texts: Vec<String> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| s.spawn(|| gw.complete("slow", &req).unwrap().text))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(texts.iter().all(|t| t == "slow answer"));
        assert_eq!(slow.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn embeddings_shape_and_cache() {
        let gw = Gateway::builder()
            .embedding(Arc::new(MockEmbedder::new("emb", "mock-embed", 16)))
            .build();
        let out = gw.embed("emb", &["a".to_string(), "b".to_string(), "a".to_string()]).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].vector.dim(), out[1].vector.dim());
        assert_eq!(out[0].vector, out[2].vector);
        assert!(!out[0].cached && out[2].cached);
        let again = gw.embed("emb", &["a".to_string()]).unwrap();
        assert!(again[0].cached);
        assert_eq!(again[0].vector, out[0].vector);
        assert_eq!(gw.stats().provider_calls, 1);
    }

    struct Ragged;

    impl EmbeddingProvider for Ragged {
        fn id(&self) -> &str {
            "ragged"
        }
        fn model_id(&self) -> &str {
            "r"
        }
        fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError> {
            Ok(EmbeddingBatch {
                vectors: texts.iter().enumerate().map(|(i, _)| vec![1.0; i + 1]).collect(),
                latency_ms: 0,
            })
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let gw = Gateway::builder().embedding(Arc::new(Ragged)).build();
        let err = gw.embed("ragged", &["x".to_string(), "y".to_string()]).unwrap_err();
        assert!(matches!(err, GatewayError::Contract(_)));
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
