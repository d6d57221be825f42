//! Providers speaking the chat-completions / embeddings JSON shape.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, Completion, EmbeddingBatch, EmbeddingProvider, ProviderError};

#[derive(Debug, Clone)]
struct Endpoint {
    id: String,
    model_id: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl Endpoint {
    fn new(id: &str, model_id: &str, base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Endpoint {
            id: id.into(),
            model_id: model_id.into(),
            base_url: base_url.trim_end_matches('/').into(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<(Value, u64), ProviderError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut call = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let response = call.send_json(body.clone()).map_err(classify)?;
        let value: Value = response
            .into_json()
            .map_err(|e| ProviderError::Transport(format!("{url}: unreadable body: {e}")))?;
        Ok((value, started.elapsed().as_millis() as u64))
    }
}

fn classify(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Status(status, response) => {
            let message = response.into_string().unwrap_or_default();
            let message: String = message.chars().take(500).collect();
            if status == 408 || status == 429 || status >= 500 {
                ProviderError::Transport(format!("HTTP {status}: {message}"))
            } else {
                ProviderError::Rejected { status, message }
            }
        }
        ureq::Error::Transport(t) => ProviderError::Transport(t.to_string()),
    }
}

/// Chat provider posting to `<base_url>/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpChat(Endpoint);

impl HttpChat {
    pub fn new(id: &str, model_id: &str, base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        HttpChat(Endpoint::new(id, model_id, base_url, api_key, timeout))
    }
}

/// Request body for one chat call. `variant` stays local.
pub fn chat_body(model_id: &str, req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &req.system_prompt {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": req.user_prompt}));
    let mut body = json!({
        "model": model_id,
        "messages": messages,
        "temperature": req.temperature,
    });
    if let Some(max) = req.max_output_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

/// Extract (text, truncated) from a chat-completions response.
pub fn parse_chat_response(value: &Value) -> Result<(String, bool), ProviderError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProviderError::Contract("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    Ok((text, truncated))
}

pub fn parse_embedding_response(value: &Value, expected: usize) -> Result<Vec<Vec<f32>>, ProviderError> {
    let data = value
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Contract("embedding response has no data array".into()))?;
    if data.len() != expected {
        return Err(ProviderError::Contract(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut out: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Contract("embedding item lacks a vector".into()))?
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| ProviderError::Contract("embedding contains a non-number".into()))?;
        out.push((index, values));
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, v)| v).collect())
}

impl ChatProvider for HttpChat {
    fn id(&self) -> &str {
        &self.0.id
    }

    fn model_id(&self) -> &str {
        &self.0.model_id
    }

    fn is_network(&self) -> bool {
        true
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        let model = if req.model_id.is_empty() { &self.0.model_id } else { &req.model_id };
        let (value, latency_ms) = self.0.post("chat/completions", &chat_body(model, req))?;
        let (text, truncated) = parse_chat_response(&value)?;
        Ok(Completion {
            text,
            latency_ms,
            truncated,
        })
    }
}

/// Embedding provider posting to `<base_url>/embeddings`.
#[derive(Debug, Clone)]
pub struct HttpEmbedding(Endpoint);

impl HttpEmbedding {
    pub fn new(id: &str, model_id: &str, base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        HttpEmbedding(Endpoint::new(id, model_id, base_url, api_key, timeout))
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn id(&self) -> &str {
        &self.0.id
    }

    fn model_id(&self) -> &str {
        &self.0.model_id
    }

    fn is_network(&self) -> bool {
        true
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError> {
        let body = json!({"model": self.0.model_id, "input": texts});
        let (value, latency_ms) = self.0.post("embeddings", &body)?;
        Ok(EmbeddingBatch {
            vectors: parse_embedding_response(&value, texts.len())?,
            latency_ms,
        })
    }
}
