//! Call context shared by the pipeline stages.
//!
//! A [`Session`] routes each call to the provider playing the requested role
//! and appends one [`LedgerEntry`] per gateway call, successful or not.
//! Concurrent work runs on forks whose ledgers are absorbed back in a fixed
//! order, so the ledger sequence never depends on thread scheduling.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::gateway::{CacheKey, ChatRequest, ChatResponse, Gateway, GatewayError, Tag};
use crate::prompts::Rendered;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub generator: String,
    pub scorer: String,
    pub embedder: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Scorer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Chat,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingItem {
    pub text: String,
    pub key: CacheKey,
    pub cached: bool,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub kind: CallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub provider_id: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<CacheKey>,
    pub cached: bool,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<EmbeddingItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct Session {
    gateway: Arc<Gateway>,
    roles: Roles,
    temperature: f64,
    ledger: Mutex<Vec<LedgerEntry>>,
    warnings: Mutex<Vec<String>>,
}

impl Session {
    pub fn new(gateway: Arc<Gateway>, roles: Roles) -> Self {
        Session {
            gateway,
            roles,
            temperature: 0.0,
            ledger: Mutex::new(Vec::new()),
            warnings: Mutex::new(Vec::new()),
        }
    }

    /// Convenience for a single provider doing everything.
    pub fn single(gateway: Arc<Gateway>, chat: &str, embedder: &str) -> Self {
        Session::new(
            gateway,
            Roles {
                generator: chat.into(),
                scorer: chat.into(),
                embedder: embedder.into(),
            },
        )
    }

    /// Override the pipeline temperature (0 unless set).
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Same gateway and roles, empty ledger.
    pub fn fork(&self) -> Session {
        Session {
            gateway: Arc::clone(&self.gateway),
            roles: self.roles.clone(),
            temperature: self.temperature,
            ledger: Mutex::new(Vec::new()),
            warnings: Mutex::new(Vec::new()),
        }
    }

    /// Append a fork's ledger and warnings.
    pub fn absorb(&self, fork: Session) {
        let ledger = fork.ledger.into_inner().expect("ledger lock");
        let warnings = fork.warnings.into_inner().expect("warning lock");
        self.ledger.lock().expect("ledger lock").extend(ledger);
        self.warnings.lock().expect("warning lock").extend(warnings);
    }

    pub fn warn(&self, message: impl Into<String>) {
        self.warnings.lock().expect("warning lock").push(message.into());
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warning lock").clone()
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.ledger.lock().expect("ledger lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.ledger.lock().expect("ledger lock").len()
    }

    fn provider(&self, role: Role) -> &str {
        match role {
            Role::Generator => &self.roles.generator,
            Role::Scorer => &self.roles.scorer,
        }
    }

    pub fn chat(
        &self,
        role: Role,
        tag: Tag,
        (system, user): Rendered,
        variant: Option<String>,
    ) -> Result<ChatResponse, GatewayError> {
        let provider = self.provider(role).to_string();
        let mut req = ChatRequest::new(tag, system, user).with_temperature(self.temperature);
        req.variant = variant;
        let result = self.gateway.complete(&provider, &req);
        let model_id = self.gateway.chat_model(&provider).unwrap_or_default();
        let mut entry = LedgerEntry {
            kind: CallKind::Chat,
            tag: Some(tag),
            variant: req.variant.clone(),
            provider_id: provider.clone(),
            model_id: model_id.clone(),
            key: Some(CacheKey::chat(&provider, &model_id, &req)),
            cached: false,
            latency_ms: 0,
            temperature: Some(req.temperature),
            system_prompt: req.system_prompt.clone(),
            user_prompt: Some(req.user_prompt.clone()),
            response: None,
            truncated: false,
            items: Vec::new(),
            error: None,
        };
        match &result {
            Ok(r) => {
                entry.cached = r.cached;
                entry.latency_ms = r.latency_ms;
                entry.response = Some(r.text.clone());
                entry.truncated = r.truncated;
                if r.truncated {
                    self.warn(format!("{tag} response from {provider} looks truncated"));
                }
            }
            Err(e) => entry.error = Some(e.to_string()),
        }
        self.ledger.lock().expect("ledger lock").push(entry);
        result
    }

    /// Embed with the embedder role; one vector per text.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let provider = self.roles.embedder.clone();
        let result = self.gateway.embed(&provider, texts);
        let mut entry = LedgerEntry {
            kind: CallKind::Embedding,
            tag: None,
            variant: None,
            provider_id: provider,
            model_id: String::new(),
            key: None,
            cached: false,
            latency_ms: 0,
            temperature: None,
            system_prompt: None,
            user_prompt: None,
            response: None,
            truncated: false,
            items: Vec::new(),
            error: None,
        };
        match &result {
            Ok(out) => {
                entry.model_id = out.first().map(|e| e.vector.model_id.clone()).unwrap_or_default();
                entry.cached = out.iter().all(|e| e.cached);
                entry.items = texts
                    .iter()
                    .zip(out)
                    .map(|(t, e)| EmbeddingItem {
                        text: t.clone(),
                        key: e.key.clone(),
                        cached: e.cached,
                        values: e.vector.values.clone(),
                    })
                    .collect();
            }
            Err(e) => entry.error = Some(e.to_string()),
        }
        self.ledger.lock().expect("ledger lock").push(entry);
        result.map(|out| out.into_iter().map(|e| e.vector.values).collect())
    }
}
