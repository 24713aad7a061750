use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// The four top-K scores of one ranking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub ndcg: f64,
    pub hit: f64,
    pub mrr: f64,
    pub recall: f64,
}

impl RankingMetrics {
    pub fn values(&self) -> [f64; 4] {
        [self.ndcg, self.hit, self.mrr, self.recall]
    }
}

/// Binary-gain NDCG, Hit, MRR and Recall of `ranked` truncated at `k`.
/// `None` when `relevant` is empty, since every metric is undefined then.
pub fn compute_ranking_metrics(
    ranked: &[usize],
    relevant: &BTreeSet<usize>,
    k: usize,
) -> Option<RankingMetrics> {
    if relevant.is_empty() {
        return None;
    }
    let mut dcg = 0.0;
    let mut hits = 0usize;
    let mut first = None;
    for (i, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((i + 2) as f64).log2();
            hits += 1;
            first.get_or_insert(i + 1);
        }
    }
    let idcg: f64 = (0..relevant.len().min(k))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Some(RankingMetrics {
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        hit: if hits > 0 { 1.0 } else { 0.0 },
        mrr: first.map_or(0.0, |r| 1.0 / r as f64),
        recall: hits as f64 / relevant.len() as f64,
    })
}

/// Candidates ordered by descending score, ties by ascending id. NaN scores
/// sort last.
pub fn rank_by_score<T: Scalar>(candidates: &[usize], scores: &[T]) -> Vec<usize> {
    let mut order: Vec<(usize, T)> = candidates
        .iter()
        .copied()
        .zip(scores.iter().copied())
        .collect();
    order.sort_by(|a, b| match (a.1.is_nan(), b.1.is_nan()) {
        (false, false) => {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        }
        (x, y) => x.cmp(&y).then(a.0.cmp(&b.0)),
    });
    order.into_iter().map(|(c, _)| c).collect()
}
