//! Aspect retention between a source and its summary.

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::gateway::Tag;
use crate::planning::{normalize_label, parse_list};
use crate::prompts;
use crate::session::{Role, Session};
use crate::thread::DocumentSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectMatch {
    /// Case-insensitive equality after whitespace normalization.
    #[default]
    Exact,
    /// Token Jaccard overlap of at least one half.
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectOverlapReport {
    pub source_aspects: Vec<String>,
    pub summary_aspects: Vec<String>,
    pub common: Vec<String>,
    pub score: f64,
    pub matching: AspectMatch,
}

fn key(label: &str) -> String {
    normalize_label(label).to_lowercase()
}

fn dedup(labels: &[String]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    labels
        .iter()
        .map(|l| normalize_label(l))
        .filter(|l| !l.is_empty() && seen.insert(l.to_lowercase()))
        .collect()
}

fn tokens(label: &str) -> std::collections::BTreeSet<String> {
    crate::metrics::rouge::tokenize(label).collect()
}

fn fuzzy_equal(a: &str, b: &str) -> bool {
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    union > 0 && ta.intersection(&tb).count() as f64 / union as f64 >= 0.5
}

/// Score two already-extracted aspect lists.
pub fn compare_aspects(
    source: &[String],
    summary: &[String],
    matching: AspectMatch,
) -> Result<AspectOverlapReport, MetricError> {
    let source_aspects = dedup(source);
    let summary_aspects = dedup(summary);
    if source_aspects.is_empty() {
        return Err(MetricError::Undefined("no source aspects".into()));
    }
    let common: Vec<String> = source_aspects
        .iter()
        .filter(|a| {
            summary_aspects.iter().any(|b| match matching {
                AspectMatch::Exact => key(a) == key(b),
                AspectMatch::Fuzzy => fuzzy_equal(a, b),
            })
        })
        .cloned()
        .collect();
    Ok(AspectOverlapReport {
        score: common.len() as f64 / source_aspects.len() as f64,
        source_aspects,
        summary_aspects,
        common,
        matching,
    })
}

fn extract(session: &Session, text: &str, variant: &str) -> Result<Vec<String>, MetricError> {
    let reply = session.chat(
        Role::Generator,
        Tag::AspectMetric,
        prompts::aspect_metric(text),
        Some(variant.to_string()),
    )?;
    Ok(parse_list(&reply.text))
}

/// Extract aspects from both sides with the metric prompt, then compare.
pub fn aspect_overlap(
    session: &Session,
    source: &DocumentSet,
    summary: &str,
    matching: AspectMatch,
) -> Result<AspectOverlapReport, MetricError> {
    let source_aspects = extract(session, &source.joined(), "source")?;
    let summary_aspects = extract(session, summary, "summary")?;
    compare_aspects(&source_aspects, &summary_aspects, matching)
}
