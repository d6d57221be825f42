//! Offline providers: a scripted chat mock, a seeded random embedder and a
//! feature-hashing embedder.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    CacheKey, ChatProvider, ChatRequest, Completion, EmbeddingBatch, EmbeddingProvider, ProviderError, Tag,
};

/// Decides whether a scripted rule answers a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    /// Exact cache-key digest of the request under this provider.
    Digest(String),
    /// Conjunction of optional predicates; all absent matches everything.
    Prompt {
        tag: Option<Tag>,
        variant: Option<String>,
        contains: Option<String>,
    },
}

impl Matcher {
    pub fn any() -> Self {
        Matcher::Prompt {
            tag: None,
            variant: None,
            contains: None,
        }
    }

    pub fn contains(needle: impl Into<String>) -> Self {
        Matcher::Prompt {
            tag: None,
            variant: None,
            contains: Some(needle.into()),
        }
    }

    pub fn tag(tag: Tag) -> Self {
        Matcher::Prompt {
            tag: Some(tag),
            variant: None,
            contains: None,
        }
    }

    pub fn tagged(tag: Tag, variant: Option<&str>, contains: Option<&str>) -> Self {
        Matcher::Prompt {
            tag: Some(tag),
            variant: variant.map(Into::into),
            contains: contains.map(Into::into),
        }
    }

    fn fires(&self, key: &CacheKey, req: &ChatRequest) -> bool {
        match self {
            Matcher::Digest(d) => d == key.as_str(),
            Matcher::Prompt { tag, variant, contains } => {
                tag.is_none_or(|t| t == req.tag)
                    && variant.as_ref().is_none_or(|v| req.variant.as_ref() == Some(v))
                    && contains.as_ref().is_none_or(|c| req.full_prompt().contains(c.as_str()))
            }
        }
    }

    /// True when some request could be matched by both.
    fn overlaps(&self, other: &Matcher) -> bool {
        fn compatible<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            }
        }
        match (self, other) {
            (Matcher::Digest(a), Matcher::Digest(b)) => a == b,
            (Matcher::Digest(_), _) | (_, Matcher::Digest(_)) => false,
            (
                Matcher::Prompt { tag: t1, variant: v1, contains: c1 },
                Matcher::Prompt { tag: t2, variant: v2, contains: c2 },
            ) => {
                let needles = match (c1, c2) {
                    (Some(a), Some(b)) => a.contains(b.as_str()) || b.contains(a.as_str()),
                    _ => true,
                };
                compatible(t1, t2) && compatible(v1, v2) && needles
            }
        }
    }
}

/// A matcher plus the responses it hands out in order; the last one repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleSpec", into = "RuleSpec")]
pub struct Rule {
    pub matcher: Matcher,
    pub responses: Vec<String>,
}

/// Script-file form of a rule: `digest`, or any of `tag`/`variant`/`contains`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contains: Option<String>,
    responses: Vec<String>,
}

impl TryFrom<RuleSpec> for Rule {
    type Error = String;

    fn try_from(spec: RuleSpec) -> Result<Self, Self::Error> {
        let matcher = match spec.digest {
            Some(d) if spec.tag.is_none() && spec.variant.is_none() && spec.contains.is_none() => Matcher::Digest(d),
            Some(_) => return Err("a digest rule cannot also have tag, variant or contains".into()),
            None => Matcher::Prompt {
                tag: spec.tag,
                variant: spec.variant,
                contains: spec.contains,
            },
        };
        Ok(Rule {
            matcher,
            responses: spec.responses,
        })
    }
}

impl From<Rule> for RuleSpec {
    fn from(rule: Rule) -> Self {
        match rule.matcher {
            Matcher::Digest(d) => RuleSpec {
                digest: Some(d),
                tag: None,
                variant: None,
                contains: None,
                responses: rule.responses,
            },
            Matcher::Prompt { tag, variant, contains } => RuleSpec {
                digest: None,
                tag,
                variant,
                contains,
                responses: rule.responses,
            },
        }
    }
}

impl Rule {
    pub fn new(matcher: Matcher, response: impl Into<String>) -> Self {
        Rule {
            matcher,
            responses: vec![response.into()],
        }
    }

    pub fn sequence(matcher: Matcher, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Rule {
            matcher,
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }
}

/// Script file layout: `{"rules": [{"tag": "aspect", "contains": "...", "responses": ["..."]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub rules: Vec<Rule>,
}

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Chat provider that answers from a fixed script.
pub struct MockChat {
    id: String,
    model_id: String,
    rules: Vec<Rule>,
    cursors: Vec<AtomicUsize>,
    fallback: Option<Responder>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for MockChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockChat")
            .field("id", &self.id)
            .field("rules", &self.rules.len())
            .finish()
    }
}

impl MockChat {
    /// Fails when two rules could fire for the same request.
    pub fn new(id: impl Into<String>, model_id: impl Into<String>, rules: Vec<Rule>) -> Result<Self, ProviderError> {
        for (i, a) in rules.iter().enumerate() {
            if a.responses.is_empty() {
                return Err(ProviderError::Config(format!("script rule #{i} has no responses")));
            }
            for (j, b) in rules.iter().enumerate().skip(i + 1) {
                if a.matcher.overlaps(&b.matcher) {
                    return Err(ProviderError::Config(format!(
                        "script rules #{i} and #{j} overlap: {:?} / {:?}",
                        a.matcher, b.matcher
                    )));
                }
            }
        }
        let cursors = rules.iter().map(|_| AtomicUsize::new(0)).collect();
        Ok(MockChat {
            id: id.into(),
            model_id: model_id.into(),
            rules,
            cursors,
            fallback: None,
            calls: AtomicUsize::new(0),
        })
    }

    /// Consulted when no rule fires. `None` from the closure is a script gap.
    pub fn with_fallback(mut self, f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }

    pub fn from_fn(
        id: impl Into<String>,
        model_id: impl Into<String>,
        f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        MockChat::new(id, model_id, Vec::new())
            .expect("empty script is valid")
            .with_fallback(f)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let model = if req.model_id.is_empty() { &self.model_id } else { &req.model_id };
        let key = CacheKey::chat(&self.id, model, req);
        let fired: Vec<usize> = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.matcher.fires(&key, req))
            .map(|(i, _)| i)
            .collect();
        match fired.as_slice() {
            [i] => {
                let rule = &self.rules[*i];
                let n = self.cursors[*i].fetch_add(1, Ordering::SeqCst);
                let text = rule.responses[n.min(rule.responses.len() - 1)].clone();
                Ok(Completion::instant(text))
            }
            [] => match self.fallback.as_ref().and_then(|f| f(req)) {
                Some(text) => Ok(Completion::instant(text)),
                None => Err(ProviderError::ScriptGap {
                    tag: req.tag.as_str().to_string(),
                }),
            },
            many => Err(ProviderError::Config(format!(
                "{} script rules matched one request tagged {}: {many:?}",
                many.len(),
                req.tag
            ))),
        }
    }
}

/// Hash-seeded pseudo-random unit vectors, with optional fixed overrides.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    id: String,
    model_id: String,
    dim: usize,
    overrides: HashMap<String, Vec<f32>>,
}

impl MockEmbedder {
    pub fn new(id: impl Into<String>, model_id: impl Into<String>, dim: usize) -> Self {
        MockEmbedder {
            id: id.into(),
            model_id: model_id.into(),
            dim: dim.max(1),
            overrides: HashMap::new(),
        }
    }

    pub fn with_override(mut self, text: impl Into<String>, vector: Vec<f32>) -> Self {
        self.overrides.insert(text.into(), vector);
        self
    }

    /// The seeded scheme: ChaCha8 keyed by SHA-256 of the text, uniform
    /// entries in [-1, 1), scaled to unit length.
    pub fn seeded_vector(text: &str, dim: usize) -> Vec<f32> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.iter()
            .map(|x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 })
            .collect()
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError> {
        Ok(EmbeddingBatch {
            vectors: texts
                .iter()
                .map(|t| {
                    self.overrides
                        .get(t)
                        .cloned()
                        .unwrap_or_else(|| Self::seeded_vector(t, self.dim))
                })
                .collect(),
            latency_ms: 0,
        })
    }
}

/// Bag-of-words feature hashing: lowercase alphanumeric tokens are hashed
/// into signed buckets and the result is L2-normalized. Texts sharing words
/// get positive cosine similarity, which makes it a usable offline stand-in
/// for a sentence-embedding model.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    id: String,
    model_id: String,
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(id: impl Into<String>, model_id: impl Into<String>, dim: usize) -> Self {
        HashingEmbedder {
            id: id.into(),
            model_id: model_id.into(),
            dim: dim.max(1),
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f64; self.dim];
        for token in crate::metrics::rouge::tokenize(text) {
            let h = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % self.dim as u64;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter()
            .map(|x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 })
            .collect()
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, ProviderError> {
        Ok(EmbeddingBatch {
            vectors: texts.iter().map(|t| self.vector(t)).collect(),
            latency_ms: 0,
        })
    }
}
