use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, ParamStore, SparseMatrix, Tape};
use crate::config::{Hyperparams, Protocol};
use crate::error::{Error, Result};
use crate::eval::{evaluate_tasks, RankingTask, TaskSet};
use crate::model::{BatchSampler, ModelInputs, Recommender};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub val_ndcg10: Option<f64>,
    pub secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val: Option<f64>,
    pub stopped_early: bool,
    /// Positive pairs dropped because no negative could be drawn.
    pub skipped: usize,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Validation NDCG@10 of the current parameters.
fn validate<T: Scalar, M: Recommender<T> + ?Sized>(
    model: &M,
    inputs: &ModelInputs<T>,
    val: &[RankingTask],
) -> Result<f64> {
    let emb = model.embeddings(inputs)?;
    let set = TaskSet {
        tasks: val.to_vec(),
        cohort: val.len(),
        ..Default::default()
    };
    Ok(evaluate_tasks(&emb, &set, &[10], Protocol::Intra, "val").ndcg(10))
}

/// Mini-batch Adam over shuffled train positives. With validation tasks the
/// best epoch by NDCG@10 is kept and training stops after `patience` epochs
/// without improvement; without them the final parameters are kept.
pub fn train<T: Scalar, M: Recommender<T> + ?Sized>(
    model: &mut M,
    inputs: &ModelInputs<T>,
    val: &[RankingTask],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrainLog> {
    let project: Vec<SparseMatrix<f64>> = inputs.project.iter().map(|(_, m)| m.clone()).collect();
    let sampler = BatchSampler::new(
        &inputs.y,
        &project,
        &inputs.file_repo,
        inputs.dims.repos,
        hyper.batch_size,
        hyper.same_repo_negatives,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let mut adam = AdamState::new(model.params(), AdamConfig::default());
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ParamStore<T>)> = None;
    let mut stale = 0;

    for epoch in 0..hyper.epochs {
        let start = Instant::now();
        let (batches, skipped) = sampler.epoch(&mut rng);
        log.skipped += skipped;
        let mut total = 0.0;
        for batch in &batches {
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, inputs, batch)?;
            let value = tape.value(loss).item().to_f64_lossy();
            if !value.is_finite() {
                return Err(Error::Argument(format!(
                    "loss became {value} in epoch {epoch}"
                )));
            }
            total += value;
            let grads = tape.backward(loss)?.for_params(model.params());
            adam_step(model.params_mut(), &grads, &mut adam, hyper.lr)?;
        }
        let val_ndcg10 = if val.is_empty() {
            None
        } else {
            Some(validate(model, inputs, val)?)
        };
        log.epochs.push(EpochLog {
            epoch,
            loss: total / batches.len().max(1) as f64,
            val_ndcg10,
            secs: start.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: loss {:.6} val {:?}",
            log.epochs[epoch].loss,
            val_ndcg10
        );

        let Some(score) = val_ndcg10 else {
            log.best_epoch = epoch;
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params().clone()));
            log.best_epoch = epoch;
            log.best_val = Some(score);
            stale = 0;
        } else {
            stale += 1;
            if hyper.patience.is_some_and(|p| stale >= p) {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(log)
}
