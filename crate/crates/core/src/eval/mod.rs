//! Ranking metrics, the intra-project, cross-project and cold-start
//! protocols, baseline runs and inference timing.

mod metrics;
mod protocol;
mod report;
mod timing;

pub use metrics::{compute_ranking_metrics, rank_by_score, RankingMetrics};
pub use protocol::{EvalContext, RankingTask, Target, TaskSet, COLD_START_MAX_COMMITS};
pub use report::{evaluate_tasks, MetricReport, UserMetrics};
pub use timing::{measure_inference, measure_interleaved, InferenceTiming};

use crate::config::{ModelKind, Protocol, RunConfig};
use crate::dataset::{Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::model::{train, AnyModel, ModelInputs, Recommender, TrainLog};
use crate::scalar::Scalar;
use crate::semantics::SegmentFeatures;

/// Evaluates a trained model under the configured protocol and Ks on the
/// test window.
pub fn evaluate_model<T: Scalar, M: Recommender<T> + ?Sized>(
    model: &M,
    inputs: &ModelInputs<T>,
    ctx: &EvalContext,
    cfg: &RunConfig,
) -> Result<MetricReport> {
    let emb = model.embeddings(inputs)?;
    let set = ctx.tasks(cfg.protocol, Target::Test);
    Ok(evaluate_tasks(
        &emb,
        &set,
        &cfg.ks,
        cfg.protocol,
        &cfg.tag(),
    ))
}

/// Builds inputs, trains the configured model with validation early stopping
/// and evaluates it on the test window.
pub fn train_and_evaluate<T: Scalar>(
    dataset: &Dataset,
    split: &DatasetSplit,
    features: Option<&SegmentFeatures>,
    cfg: &RunConfig,
) -> Result<(AnyModel<T>, TrainLog, MetricReport)> {
    cfg.validate()?;
    let inputs = ModelInputs::<T>::build(dataset, split, features, cfg)?;
    let ctx = EvalContext::new(dataset, split);
    let mut model = AnyModel::new(cfg.model, &inputs, &cfg.hyper, cfg.flags, cfg.seed)?;
    let val = ctx.tasks(Protocol::Intra, Target::Validation).tasks;
    let log = train(&mut model, &inputs, &val, &cfg.hyper, cfg.seed)?;
    let report = evaluate_model(&model, &inputs, &ctx, cfg)?;
    Ok((model, log, report))
}

/// Trains and evaluates one of the two baselines under `cfg`'s split, seed,
/// hyperparameters and protocol.
pub fn run_baseline(
    name: &str,
    dataset: &Dataset,
    split: &DatasetSplit,
    cfg: &RunConfig,
) -> Result<MetricReport> {
    let kind = match name.to_ascii_lowercase().as_str() {
        "mf" => ModelKind::Mf,
        "lightgcn" | "lgn" => ModelKind::LightGcn,
        other => {
            return Err(Error::Argument(format!(
                "unknown baseline {other:?} (expected MF or LightGCN)"
            )))
        }
    };
    let cfg = RunConfig {
        model: kind,
        ..cfg.clone()
    };
    let (_, _, report) = train_and_evaluate::<f32>(dataset, split, None, &cfg)?;
    Ok(report)
}
