//! Providers that answer from a recorded call ledger.
//!
//! Replay providers keep the recorded provider and model ids, so every
//! request hashes to the same cache key as in the original run and is looked
//! up by that digest. A request with no recording is an error; nothing ever
//! leaves the process.

use std::collections::HashMap;
use std::sync::Arc;

use super::{
    CacheKey, ChatProvider, ChatRequest, Completion, EmbeddingBatch, EmbeddingProvider, Gateway, ProviderError,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedChat {
    pub provider_id: String,
    pub model_id: String,
    pub key: CacheKey,
    pub text: String,
    pub latency_ms: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedEmbedding {
    pub provider_id: String,
    pub model_id: String,
    pub key: CacheKey,
    pub values: Vec<f32>,
    pub latency_ms: u64,
}

#[derive(Debug)]
pub struct ReplayChat {
    id: String,
    model_id: String,
    recorded: HashMap<CacheKey, Completion>,
}

impl ChatProvider for ReplayChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        let model = if req.model_id.is_empty() { &self.model_id } else { &req.model_id };
        let key = CacheKey::chat(&self.id, model, req);
        self.recorded.get(&key).cloned().ok_or_else(|| ProviderError::ScriptGap {
            tag: format!("{} (not in the replayed ledger)", req.tag),
        })
    }
}

#[derive(Debug)]
pub struct ReplayEmbedder {
    id: String,
    model_id: String,
    recorded: HashMap<CacheKey, (Vec<f32>, u64)>,
}

impl EmbeddingProvider for ReplayEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError> {
        let mut vectors = Vec::with_capacity(texts.len());
        let mut latency_ms = 0;
        for t in texts {
            let key = CacheKey::embedding(&self.id, &self.model_id, t);
            let (v, l) = self
                .recorded
                .get(&key)
                .ok_or_else(|| ProviderError::ScriptGap {
                    tag: format!("embedding of {t:?} (not in the replayed ledger)"),
                })?;
            latency_ms = latency_ms.max(*l);
            vectors.push(v.clone());
        }
        Ok(EmbeddingBatch { vectors, latency_ms })
    }
}

/// Provider declared in the replayed run, whether or not it was called.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredProvider {
    pub id: String,
    pub model_id: String,
    pub embedding: bool,
}

/// Gateway with one replay provider per declared id and an empty in-memory cache.
pub fn replay_gateway(declared: &[DeclaredProvider], chats: &[RecordedChat], embeds: &[RecordedEmbedding]) -> Gateway {
    let mut chat: HashMap<String, ReplayChat> = HashMap::new();
    let mut emb: HashMap<String, ReplayEmbedder> = HashMap::new();
    for d in declared {
        if d.embedding {
            emb.insert(
                d.id.clone(),
                ReplayEmbedder {
                    id: d.id.clone(),
                    model_id: d.model_id.clone(),
                    recorded: HashMap::new(),
                },
            );
        } else {
            chat.insert(
                d.id.clone(),
                ReplayChat {
                    id: d.id.clone(),
                    model_id: d.model_id.clone(),
                    recorded: HashMap::new(),
                },
            );
        }
    }
    for r in chats {
        let p = chat.entry(r.provider_id.clone()).or_insert_with(|| ReplayChat {
            id: r.provider_id.clone(),
            model_id: r.model_id.clone(),
            recorded: HashMap::new(),
        });
        p.recorded.entry(r.key.clone()).or_insert_with(|| Completion {
            text: r.text.clone(),
            latency_ms: r.latency_ms,
            truncated: r.truncated,
        });
    }
    for r in embeds {
        let p = emb.entry(r.provider_id.clone()).or_insert_with(|| ReplayEmbedder {
            id: r.provider_id.clone(),
            model_id: r.model_id.clone(),
            recorded: HashMap::new(),
        });
        p.recorded
            .entry(r.key.clone())
            .or_insert_with(|| (r.values.clone(), r.latency_ms));
    }
    let mut builder = Gateway::builder();
    for (_, p) in chat {
        builder = builder.chat(Arc::new(p));
    }
    for (_, p) in emb {
        builder = builder.embedding(Arc::new(p));
    }
    builder.build()
}
