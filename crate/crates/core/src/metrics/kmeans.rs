//! Lloyd's k-means with seeded farthest-point initialization and restarts.
//!
//! Restart r starts from point `(s + r) mod n`, where `s` is drawn with
//! ChaCha8 seeded from `seed`; each further centroid is the point farthest
//! (squared Euclidean) from its nearest chosen centroid, ties to the lowest
//! index. The restart with the lowest SSE is kept, ties to the earliest. Assignment ties go to
//! the lowest cluster id. A cluster left empty after an assignment pass is
//! reseeded with the point farthest from its own centroid.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const MAX_ITERATIONS: usize = 100;
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionClustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
}

impl OpinionClustering {
    /// Within-cluster sum of squared distances to the centroids.
    pub fn sse(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &c)| dist2(p, &self.centroids[c]))
            .sum()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn init(points: &[Vec<f64>], k: usize, first: usize) -> Vec<Vec<f64>> {
    let mut chosen = vec![first];
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist2(p, &points[c]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        chosen.push(best.expect("k <= n leaves a candidate").0);
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| s.into_iter().map(|x| x / n as f64).collect())
        .collect()
}

pub fn kmeans_f64(points: &[Vec<f64>], k: usize, seed: u64) -> Result<OpinionClustering, MetricError> {
    let n = points.len();
    if k == 0 {
        return Err(MetricError::Parameter("k must be positive".into()));
    }
    if k > n {
        return Err(MetricError::Parameter(format!("k = {k} exceeds the {n} points")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(MetricError::Parameter("points have differing dimensions".into()));
    }

    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    let mut best: Option<(f64, OpinionClustering)> = None;
    for r in 0..RESTARTS.min(n) {
        let run = lloyd(points, k, dim, init(points, k, (start + r) % n), seed);
        let sse = run.sse(points);
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, run));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn lloyd(points: &[Vec<f64>], k: usize, dim: usize, mut centroids: Vec<Vec<f64>>, seed: u64) -> OpinionClustering {
    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        for c in 0..k {
            if next.contains(&c) {
                continue;
            }
            let mut counts = vec![0usize; k];
            for &a in &next {
                counts[a] += 1;
            }
            let mut far: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if counts[next[i]] < 2 {
                    continue;
                }
                let d = dist2(p, &centroids[next[i]]);
                if far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            let (i, _) = far.expect("k <= n leaves a shared cluster");
            next[i] = c;
            centroids[c] = points[i].clone();
        }
        let stable = next == assignments;
        assignments = next;
        centroids = means(points, &assignments, k, dim);
        if stable {
            break;
        }
    }
    OpinionClustering {
        k,
        assignments,
        centroids,
        seed,
        iterations,
    }
}

pub fn kmeans(vectors: &[Vec<f32>], k: usize, seed: u64) -> Result<OpinionClustering, MetricError> {
    let points: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().map(|x| f64::from(*x)).collect())
        .collect();
    kmeans_f64(&points, k, seed)
}
