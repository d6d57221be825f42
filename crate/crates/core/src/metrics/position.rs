//! Positional representation of source sentences in a summary.
//!
//! Per source sentence: the maximum cosine to any summary sentence; a
//! temperature-1 softmax over those maxima; a rank quantile
//! `q = (#weights strictly below) / (n - 1)`; and a threshold equal to the
//! sorted quantile at position `ceil(cutoff * n)`. A sentence is represented
//! iff its quantile is at least the threshold, so with distinct scores exactly
//! `ceil(cutoff * n)` sentences are not represented.

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::gateway::cosine;
use crate::sentence::SentenceUnit;
use crate::session::Session;

pub const DEFAULT_CUTOFF: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePosition {
    pub global_index: usize,
    pub max_similarity: f64,
    pub softmax_weight: f64,
    pub quantile_score: f64,
    pub represented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub sentences: Vec<SentencePosition>,
    pub quantile_cutoff: f64,
    pub threshold_used: f64,
    pub not_represented_indices: Vec<usize>,
}

impl PositionReport {
    pub fn represented_count(&self) -> usize {
        self.sentences.iter().filter(|s| s.represented).count()
    }
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Classify from per-sentence maximum similarities.
pub fn position_from_scores(
    indices: &[usize],
    max_similarity: &[f64],
    quantile_cutoff: f64,
) -> Result<PositionReport, MetricError> {
    let n = max_similarity.len();
    if n == 0 || indices.len() != n {
        return Err(MetricError::Undefined("no source sentences to place".into()));
    }
    if !(0.0..=1.0).contains(&quantile_cutoff) {
        return Err(MetricError::Parameter(format!("quantile cutoff {quantile_cutoff} outside [0, 1]")));
    }
    let weights = softmax(max_similarity);
    let quantiles: Vec<f64> = weights
        .iter()
        .map(|w| {
            if n == 1 {
                1.0
            } else {
                weights.iter().filter(|x| *x < w).count() as f64 / (n - 1) as f64
            }
        })
        .collect();
    let mut sorted = quantiles.clone();
    sorted.sort_by(f64::total_cmp);
    let at = ((quantile_cutoff * n as f64).ceil() as usize).min(n - 1);
    let threshold = sorted[at];
    let sentences: Vec<SentencePosition> = (0..n)
        .map(|i| SentencePosition {
            global_index: indices[i],
            max_similarity: max_similarity[i],
            softmax_weight: weights[i],
            quantile_score: quantiles[i],
            represented: quantiles[i] >= threshold,
        })
        .collect();
    let mut not_represented_indices: Vec<usize> = sentences
        .iter()
        .filter(|s| !s.represented)
        .map(|s| s.global_index)
        .collect();
    not_represented_indices.sort_unstable();
    Ok(PositionReport {
        sentences,
        quantile_cutoff,
        threshold_used: threshold,
        not_represented_indices,
    })
}

pub fn position_from_vectors(
    indices: &[usize],
    source: &[Vec<f32>],
    summary: &[Vec<f32>],
    quantile_cutoff: f64,
) -> Result<PositionReport, MetricError> {
    if summary.is_empty() {
        return Err(MetricError::Undefined("summary has no sentences".into()));
    }
    let maxima: Vec<f64> = source
        .iter()
        .map(|s| summary.iter().map(|t| cosine(s, t)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    position_from_scores(indices, &maxima, quantile_cutoff)
}

pub fn position_representation(
    session: &Session,
    source: &[SentenceUnit],
    summary: &[String],
    quantile_cutoff: f64,
) -> Result<PositionReport, MetricError> {
    if source.is_empty() || summary.is_empty() {
        return Err(MetricError::Undefined("position analysis needs source and summary sentences".into()));
    }
    let texts: Vec<String> = source.iter().map(|u| u.text.clone()).collect();
    let source_vecs = session.embed(&texts)?;
    let summary_vecs = session.embed(summary)?;
    let indices: Vec<usize> = source.iter().map(|u| u.global_index).collect();
    position_from_vectors(&indices, &source_vecs, &summary_vecs, quantile_cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_similarity_outlier_is_not_represented() {
        let r = position_from_scores(&[0, 1, 2, 3], &[1.0, 1.0, 0.0, 1.0], 0.10).unwrap();
        assert_eq!(r.not_represented_indices, [2]);
        let q: Vec<f64> = r.sentences.iter().map(|s| s.quantile_score).collect();
        assert_eq!(q, [1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(r.threshold_used, 1.0 / 3.0);
    }

    #[test]
    fn all_equal_scores_all_represented() {
        let r = position_from_scores(&[0, 1, 2], &[1.0; 3], 0.10).unwrap();
        assert!(r.not_represented_indices.is_empty());
    }

    #[test]
    fn distinct_scores_cut_ceil_fraction() {
        for n in 1..80usize {
            let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
            let idx: Vec<usize> = (0..n).collect();
            let r = position_from_scores(&idx, &scores, 0.10).unwrap();
            let expect = ((0.10 * n as f64).ceil() as usize).min(n - 1);
            assert_eq!(r.not_represented_indices.len(), expect, "n = {n}");
        }
    }

    #[test]
    fn single_sentence_is_represented() {
        let r = position_from_scores(&[7], &[0.2], 0.10).unwrap();
        assert!(r.sentences[0].represented);
    }
}
