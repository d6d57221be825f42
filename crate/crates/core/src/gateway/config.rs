//! Gateway configuration file.
//!
//! ```json
//! {
//!   "providers": [
//!     {"id": "gpt", "kind": "chat", "base_url": "https://api.example.com/v1",
//!      "model_id": "gpt-4", "api_key_env": "OPENAI_API_KEY", "timeout_s": 120},
//!     {"id": "script", "kind": "chat", "backend": "mock", "model_id": "mock-1",
//!      "script": "script.json"},
//!     {"id": "bow", "kind": "embedding", "backend": "hashing", "model_id": "bow", "dim": 384}
//!   ],
//!   "cache_dir": ".threadsumm-cache",
//!   "max_attempts": 3
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{HttpChat, HttpEmbedding};
use super::mock::{HashingEmbedder, MockChat, MockEmbedder, Script};
use super::{Gateway, GatewayError, ResponseCache, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Chat,
    Embedding,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Http,
    /// Scripted chat or seeded random embeddings.
    Mock,
    /// Offline feature-hashing embeddings.
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<u64>,
    /// Script file for mock chat providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub providers: Vec<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

const DEFAULT_DIM: usize = 384;

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl GatewayConfig {
    pub fn provider(&self, id: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.id == id)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for (i, p) in self.providers.iter().enumerate() {
            if p.id.trim().is_empty() {
                return Err(GatewayError::Config(format!("provider #{i} has an empty id")));
            }
            if self.providers[..i].iter().any(|q| q.id == p.id) {
                return Err(GatewayError::Config(format!("duplicate provider id {:?}", p.id)));
            }
            match (p.kind, p.backend) {
                (_, Backend::Http) if p.base_url.is_none() => {
                    return Err(GatewayError::Config(format!("provider {:?} needs base_url", p.id)))
                }
                (ProviderKind::Chat, Backend::Hashing) => {
                    return Err(GatewayError::Config(format!(
                        "provider {:?}: hashing backend is embedding-only",
                        p.id
                    )))
                }
                (ProviderKind::Chat, Backend::Mock) if p.script.is_none() => {
                    return Err(GatewayError::Config(format!("mock provider {:?} needs a script", p.id)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Build a gateway. `base` anchors relative paths; `use_cache` disables
    /// the on-disk cache when false.
    pub fn build(&self, base: &Path, use_cache: bool) -> Result<Gateway, GatewayError> {
        self.validate()?;
        let mut builder = Gateway::builder().retry(RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay: Duration::from_millis(self.backoff_ms),
            ..RetryPolicy::default()
        });
        for p in &self.providers {
            let timeout = Duration::from_secs(p.timeout_s.unwrap_or(120));
            let key = || -> Result<Option<String>, GatewayError> {
                match &p.api_key_env {
                    None => Ok(None),
                    Some(var) => std::env::var(var).map(Some).map_err(|_| {
                        GatewayError::Config(format!("provider {:?}: environment variable {var} is not set", p.id))
                    }),
                }
            };
            let url = p.base_url.as_deref().unwrap_or_default();
            builder = match (p.kind, p.backend) {
                (ProviderKind::Chat, Backend::Http) => {
                    builder.chat(Arc::new(HttpChat::new(&p.id, &p.model_id, url, key()?, timeout)))
                }
                (ProviderKind::Chat, Backend::Mock) => {
                    let path = resolve(base, p.script.as_deref().expect("validated"));
                    let script = load_script(&path)?;
                    let mock = MockChat::new(&p.id, &p.model_id, script.rules)
                        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
                    builder.chat(Arc::new(mock))
                }
                (ProviderKind::Embedding, Backend::Http) => {
                    builder.embedding(Arc::new(HttpEmbedding::new(&p.id, &p.model_id, url, key()?, timeout)))
                }
                (ProviderKind::Embedding, Backend::Mock) => builder.embedding(Arc::new(MockEmbedder::new(
                    &p.id,
                    &p.model_id,
                    p.dim.unwrap_or(DEFAULT_DIM),
                ))),
                (ProviderKind::Embedding, Backend::Hashing) => {
                    builder.embedding(Arc::new(HashingEmbedder::new(
                    &p.id,
                    &p.model_id,
                    p.dim.unwrap_or(DEFAULT_DIM),
                )))
                }
                (ProviderKind::Chat, Backend::Hashing) => unreachable!("validated"),
            };
        }
        if use_cache {
            if let Some(dir) = &self.cache_dir {
                builder = builder.cache(ResponseCache::on_disk(resolve(base, dir))?);
            }
        }
        Ok(builder.build())
    }
}

pub fn load_script(path: &Path) -> Result<Script, GatewayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}
