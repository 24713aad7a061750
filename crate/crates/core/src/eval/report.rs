use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_ranking_metrics, rank_by_score, RankingMetrics};
use super::protocol::{RankingTask, TaskSet};
use crate::config::Protocol;
use crate::model::Embeddings;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    pub candidates: usize,
    pub relevant: usize,
    /// Aligned with the report's `ks`.
    pub at_k: Vec<RankingMetrics>,
}

/// Mean and per-user metrics of one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Model or variant name, e.g. `CD`, `CD-S`, `MF`.
    pub tag: String,
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    pub mean: BTreeMap<usize, RankingMetrics>,
    pub per_user: Vec<UserMetrics>,
    pub cohort_users: usize,
    pub evaluated_users: usize,
    pub skipped_no_candidates: Vec<usize>,
    pub skipped_no_relevant: Vec<usize>,
    pub ms_per_example: Option<f64>,
}

/// Scores and ranks every task. Users are processed in parallel; results are
/// reduced in task order.
pub fn evaluate_tasks<T: Scalar>(
    emb: &Embeddings<T>,
    set: &TaskSet,
    ks: &[usize],
    protocol: Protocol,
    tag: &str,
) -> MetricReport {
    let per_user: Vec<UserMetrics> = set
        .tasks
        .par_iter()
        .map(|t| score_task(emb, t, ks))
        .collect();
    let mut mean = BTreeMap::new();
    for (i, &k) in ks.iter().enumerate() {
        let n = per_user.len().max(1) as f64;
        let mut acc = [0.0; 4];
        for u in &per_user {
            for (a, v) in acc.iter_mut().zip(u.at_k[i].values()) {
                *a += v;
            }
        }
        mean.insert(
            k,
            RankingMetrics {
                ndcg: acc[0] / n,
                hit: acc[1] / n,
                mrr: acc[2] / n,
                recall: acc[3] / n,
            },
        );
    }
    MetricReport {
        tag: tag.to_string(),
        protocol,
        ks: ks.to_vec(),
        mean,
        evaluated_users: per_user.len(),
        per_user,
        cohort_users: set.cohort,
        skipped_no_candidates: set.no_candidates.clone(),
        skipped_no_relevant: set.no_relevant.clone(),
        ms_per_example: None,
    }
}

fn score_task<T: Scalar>(emb: &Embeddings<T>, task: &RankingTask, ks: &[usize]) -> UserMetrics {
    let scores = emb.scores(task.user, &task.candidates);
    let ranked = rank_by_score(&task.candidates, &scores);
    UserMetrics {
        user: task.user,
        candidates: task.candidates.len(),
        relevant: task.relevant.len(),
        at_k: ks
            .iter()
            .map(|&k| compute_ranking_metrics(&ranked, &task.relevant, k).unwrap_or_default())
            .collect(),
    }
}

impl MetricReport {
    pub fn get(&self, k: usize) -> Option<&RankingMetrics> {
        self.mean.get(&k)
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        self.get(k).map_or(0.0, |m| m.ndcg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Aligned columns, one row per K.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} / {}: {} of {} users evaluated ({} without candidates, {} without relevant items)",
            self.tag,
            self.protocol,
            self.evaluated_users,
            self.cohort_users,
            self.skipped_no_candidates.len(),
            self.skipped_no_relevant.len()
        );
        let _ = writeln!(
            out,
            "{:>5}  {:>8}  {:>8}  {:>8}  {:>8}",
            "K", "NDCG", "Hit", "MRR", "Recall"
        );
        for (k, m) in &self.mean {
            let _ = writeln!(
                out,
                "{:>5}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                k, m.ndcg, m.hit, m.mrr, m.recall
            );
        }
        if let Some(ms) = self.ms_per_example {
            let _ = writeln!(out, "inference: {ms:.4} ms per example");
        }
        out
    }
}
