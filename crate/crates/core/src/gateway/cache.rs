//! Content-addressed response cache.
//!
//! Records are kept in memory and, when a directory is configured, mirrored
//! as one JSON file per key under `<dir>/<first two hex chars>/<key>.json`.
//! Files are written to a temporary name and renamed into place, so readers
//! never observe a partial record. Eviction is manual (delete the files).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub kind: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub input_chars: usize,
}

/// On-disk cache record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub request_summary: RequestSummary,
    /// Completion text, or the JSON-encoded vector for embeddings.
    pub response_text: String,
    pub created_at: String,
    pub provider_id: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl CacheRecord {
    pub fn for_chat(key: &CacheKey, provider_id: &str, model_id: &str, req: &ChatRequest, text: &str) -> Self {
        CacheRecord {
            key: key.clone(),
            request_summary: RequestSummary {
                kind: "chat".into(),
                model_id: model_id.into(),
                tag: Some(req.tag.as_str().into()),
                variant: req.variant.clone(),
                temperature: Some(req.temperature),
                input_chars: req.system_prompt.as_deref().map_or(0, str::len) + req.user_prompt.len(),
            },
            response_text: text.into(),
            created_at: now(),
            provider_id: provider_id.into(),
        }
    }

    pub fn for_embedding(key: &CacheKey, provider_id: &str, model_id: &str, input: &str, values: &[f32]) -> Self {
        CacheRecord {
            key: key.clone(),
            request_summary: RequestSummary {
                kind: "embedding".into(),
                model_id: model_id.into(),
                tag: None,
                variant: None,
                temperature: None,
                input_chars: input.len(),
            },
            response_text: serde_json::to_string(values).expect("finite floats serialize"),
            created_at: now(),
            provider_id: provider_id.into(),
        }
    }
}

#[derive(Debug)]
pub struct ResponseCache {
    memory: Mutex<HashMap<CacheKey, CacheRecord>>,
    dir: Option<PathBuf>,
    writes: AtomicUsize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            memory: Mutex::new(HashMap::new()),
            dir: None,
            writes: AtomicUsize::new(0),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(ResponseCache {
            memory: Mutex::new(HashMap::new()),
            dir: Some(dir),
            writes: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Number of records written by this handle.
    pub fn writes(&self) -> usize {
        self.writes.load(Ordering::SeqCst)
    }

    fn path_for(dir: &Path, key: &CacheKey) -> PathBuf {
        let k = key.as_str();
        dir.join(&k[..2.min(k.len())]).join(format!("{k}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheRecord>, GatewayError> {
        if let Some(r) = self.memory.lock().expect("cache lock").get(key) {
            return Ok(Some(r.clone()));
        }
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let path = Self::path_for(dir, key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        };
        let record: CacheRecord = serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        if &record.key != key {
            return Err(GatewayError::Cache(format!("{}: key mismatch", path.display())));
        }
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.clone(), record.clone());
        Ok(Some(record))
    }

    /// Store a record unless one already exists for its key.
    pub fn put(&self, record: CacheRecord) -> Result<(), GatewayError> {
        let mut memory = self.memory.lock().expect("cache lock");
        if memory.contains_key(&record.key) {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let path = Self::path_for(dir, &record.key);
            if !path.exists() {
                let parent = path.parent().expect("cache path has parent");
                fs::create_dir_all(parent).map_err(|e| GatewayError::Cache(format!("{}: {e}", parent.display())))?;
                let tmp = parent.join(format!(".{}.{}.tmp", record.key, std::process::id()));
                let body = serde_json::to_vec_pretty(&record).expect("record serializes");
                fs::write(&tmp, body).map_err(|e| GatewayError::Cache(format!("{}: {e}", tmp.display())))?;
                fs::rename(&tmp, &path).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
                self.writes.fetch_add(1, Ordering::SeqCst);
            }
        } else {
            self.writes.fetch_add(1, Ordering::SeqCst);
        }
        memory.insert(record.key.clone(), record);
        Ok(())
    }
}
