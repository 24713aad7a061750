use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::rank_by_score;
use super::protocol::RankingTask;
use crate::error::{Error, Result};
use crate::model::{ModelInputs, Recommender};
use crate::scalar::Scalar;

/// Per-example inference cost over repeated passes, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceTiming {
    pub tasks: usize,
    pub repeats: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    /// Standard deviation over the mean of the per-pass figures.
    pub cv: f64,
}

/// The model's content features are computed once up front, as a serving
/// process would cache them. One pass then runs propagation and the output
/// heads from that cache and ranks every task's candidates; its wall time
/// divided by the number of tasks is one sample. `warmup` passes run first
/// and are discarded.
pub fn measure_inference<T: Scalar, M: Recommender<T> + ?Sized>(
    model: &M,
    inputs: &ModelInputs<T>,
    tasks: &[RankingTask],
    warmup: usize,
    repeats: usize,
) -> Result<InferenceTiming> {
    let mut t = measure_interleaved(&[(model as &M, inputs)], tasks, warmup, repeats)?;
    Ok(t.remove(0))
}

/// Like [`measure_inference`] for several models, with their passes run
/// round-robin so that drift in machine load hits every model alike.
pub fn measure_interleaved<T: Scalar, M: Recommender<T> + ?Sized>(
    models: &[(&M, &ModelInputs<T>)],
    tasks: &[RankingTask],
    warmup: usize,
    repeats: usize,
) -> Result<Vec<InferenceTiming>> {
    if tasks.is_empty() {
        return Err(Error::Argument(
            "cannot time inference over zero tasks".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::Argument(
            "at least one timed repeat is required".into(),
        ));
    }
    let features = models
        .iter()
        .map(|(m, inputs)| m.item_features(inputs))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = vec![Vec::with_capacity(repeats); models.len()];
    for pass in 0..warmup + repeats {
        for (i, (model, inputs)) in models.iter().enumerate() {
            let start = Instant::now();
            let emb = model.embeddings_with(inputs, &features[i])?;
            let mut sink = 0usize;
            for t in tasks {
                let scores = emb.scores(t.user, &t.candidates);
                sink ^= rank_by_score(&t.candidates, &scores)[0];
            }
            std::hint::black_box(sink);
            let ms = start.elapsed().as_secs_f64() * 1e3 / tasks.len() as f64;
            if pass >= warmup {
                samples[i].push(ms);
            }
        }
    }
    Ok(samples
        .into_iter()
        .map(|s| summarize(tasks.len(), s))
        .collect())
}

fn summarize(tasks: usize, mut samples: Vec<f64>) -> InferenceTiming {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    samples.sort_by(f64::total_cmp);
    let pick = |q: f64| {
        samples[((q * (samples.len() - 1) as f64).round() as usize).min(samples.len() - 1)]
    };
    InferenceTiming {
        tasks,
        repeats: samples.len(),
        mean_ms: mean,
        median_ms: pick(0.5),
        p95_ms: pick(0.95),
        min_ms: samples[0],
        cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
    }
}
