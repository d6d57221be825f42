//! ROUGE-1 recall without stemming.

use std::collections::BTreeMap;

use serde::Serialize;

use super::MetricError;
use crate::thread::DocumentSet;

/// Lowercase, split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UnigramBag {
    counts: BTreeMap<String, usize>,
    token_count: usize,
}

impl UnigramBag {
    pub fn new(text: &str) -> Self {
        let mut bag = UnigramBag::default();
        for t in tokenize(text) {
            *bag.counts.entry(t).or_insert(0) += 1;
            bag.token_count += 1;
        }
        bag
    }

    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Clipped overlap: sum over tokens of min(count here, count there).
    pub fn overlap(&self, other: &UnigramBag) -> usize {
        self.counts
            .iter()
            .map(|(t, c)| (*c).min(other.count(t)))
            .sum()
    }
}

pub fn rouge1_recall(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let reference = UnigramBag::new(reference);
    if reference.token_count() == 0 {
        return Err(MetricError::Undefined("reference has no tokens".into()));
    }
    let candidate = UnigramBag::new(candidate);
    Ok(candidate.overlap(&reference) as f64 / reference.token_count() as f64)
}

/// Recall against the source documents joined together.
pub fn rouge1_recall_docasref(candidate: &str, source: &DocumentSet) -> Result<f64, MetricError> {
    rouge1_recall(candidate, &source.joined())
}
