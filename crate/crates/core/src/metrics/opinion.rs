//! Opinion-cluster coverage.
//!
//! Source sentences are clustered with k-means over their embeddings. A
//! cluster counts as covered when some summary sentence reaches cosine `t`
//! with at least one member sentence of that cluster.

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, OpinionClustering};
use super::MetricError;
use crate::gateway::cosine;
use crate::sentence::SentenceUnit;
use crate::session::Session;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_T: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionReport {
    pub k_requested: usize,
    pub k: usize,
    pub t: f64,
    pub covered_clusters: Vec<usize>,
    pub coverage: f64,
    pub clustering: OpinionClustering,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn opinion_coverage_vectors(
    source: &[Vec<f32>],
    summary: &[Vec<f32>],
    k: usize,
    t: f64,
    seed: u64,
) -> Result<OpinionReport, MetricError> {
    if source.is_empty() {
        return Err(MetricError::Undefined("no source sentences".into()));
    }
    if k == 0 {
        return Err(MetricError::Parameter("k must be positive".into()));
    }
    let mut warnings = Vec::new();
    let k_used = if k > source.len() {
        warnings.push(format!(
            "only {} source sentences; k lowered from {k} to {}",
            source.len(),
            source.len()
        ));
        source.len()
    } else {
        k
    };
    let clustering = kmeans(source, k_used, seed)?;
    let covered_clusters: Vec<usize> = (0..k_used)
        .filter(|&c| {
            clustering
                .members(c)
                .any(|i| summary.iter().any(|s| cosine(s, &source[i]) >= t))
        })
        .collect();
    Ok(OpinionReport {
        k_requested: k,
        k: k_used,
        t,
        coverage: covered_clusters.len() as f64 / k_used as f64,
        covered_clusters,
        clustering,
        warnings,
    })
}

/// Embeds both sides through the session's embedder.
pub fn opinion_coverage(
    session: &Session,
    source: &[SentenceUnit],
    summary: &[String],
    k: usize,
    t: f64,
    seed: u64,
) -> Result<OpinionReport, MetricError> {
    if source.is_empty() {
        return Err(MetricError::Undefined("no source sentences".into()));
    }
    let texts: Vec<String> = source.iter().map(|u| u.text.clone()).collect();
    let source_vecs = session.embed(&texts)?;
    let summary_vecs = if summary.is_empty() {
        Vec::new()
    } else {
        session.embed(summary)?
    };
    let report = opinion_coverage_vectors(&source_vecs, &summary_vecs, k, t, seed)?;
    for w in &report.warnings {
        session.warn(w.clone());
    }
    Ok(report)
}
