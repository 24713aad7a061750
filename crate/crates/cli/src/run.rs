//! Run directories: training writes one, evaluation, recommendation and the
//! service read it back.
//!
//! ```text
//! <run>/config.txt      archived RunConfig (absolute data paths)
//! <run>/model.ckpt      parameters, config and dataset id-map hash
//! <run>/train_log.json  per-epoch loss and validation NDCG@10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use coderec_core::config::{Protocol, RunConfig};
use coderec_core::dataset::{
    build_interaction_matrices, load_dataset, Dataset, DatasetSplit, DatasetSummary,
};
use coderec_core::eval::{evaluate_model, EvalContext, MetricReport, Target};
use coderec_core::model::{
    load_checkpoint, save_checkpoint, tfidf_segments, train, AnyModel, Checkpoint, Embeddings,
    ModelInputs, Recommender, TrainLog,
};
use coderec_core::recommend::{recommend, Scope};
use coderec_core::semantics::SegmentFeatures;
use coderec_core::Error;
use log::info;
use serde::{Deserialize, Serialize};

use crate::Result;

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.json";

fn features_of(cfg: &RunConfig) -> Result<Option<SegmentFeatures>> {
    Ok(match &cfg.features {
        Some(p) => Some(SegmentFeatures::read(p)?),
        None => None,
    })
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p)
        .map_err(|e| crate::CliError::Usage(format!("cannot resolve {}: {e}", p.display())))
}

/// Loads the dataset and prints nothing; the caller formats the summary.
pub fn prepare(data: &Path, t1: i64, t2: i64) -> Result<DatasetSummary> {
    let dataset = load_dataset(data)?;
    let split = dataset.split(t1, t2)?;
    let matrices = build_interaction_matrices(&split, dataset.dims())?;
    Ok(DatasetSummary::new(dataset.dims(), &split, &matrices))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub source: String,
    pub files: usize,
    /// Dataset files with a feature block in the source.
    pub covered: usize,
    pub n_segments: usize,
    pub d_in: usize,
}

/// Writes a feature file aligned to the dataset's file order: TF-IDF
/// segments when `import` is `None`, otherwise the imported blocks (files
/// the import lacks get zero rows).
pub fn encode_features(
    data: &Path,
    out: &Path,
    import: Option<&Path>,
    cfg: &RunConfig,
) -> Result<EncodeSummary> {
    let dataset = load_dataset(data)?;
    let n_c = cfg.hyper.n_c;
    let (source, covered, block) = match import {
        Some(path) => {
            let feats = SegmentFeatures::read(path)?;
            if feats.n_segments != n_c {
                return Err(Error::Config(format!(
                    "{} has {} segments per file, expected {n_c}",
                    path.display(),
                    feats.n_segments
                ))
                .into());
            }
            let known: std::collections::BTreeSet<&str> =
                feats.file_ids.iter().map(String::as_str).collect();
            let covered = dataset
                .files
                .iter()
                .filter(|f| known.contains(f.raw_id.as_str()))
                .count();
            if covered == 0 && !dataset.files.is_empty() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message:
                        "no file id matches the dataset; was it exported from another dataset?"
                            .into(),
                }
                .into());
            }
            (
                path.display().to_string(),
                covered,
                feats.aligned::<f32>(&dataset),
            )
        }
        None => {
            let split = dataset.split(cfg.t1, cfg.t2)?;
            let y = build_interaction_matrices(&split, dataset.dims())?.y;
            let m = tfidf_segments::<f32>(&dataset, &y, n_c, cfg.hyper.tfidf_vocabulary);
            ("tfidf".to_string(), dataset.files.len(), m)
        }
    };
    let features = SegmentFeatures {
        n_segments: n_c,
        d_in: block.cols(),
        file_ids: dataset.files.iter().map(|f| f.raw_id.clone()).collect(),
        values: block.data().to_vec(),
    };
    features.write(out)?;
    Ok(EncodeSummary {
        source,
        files: dataset.files.len(),
        covered,
        n_segments: n_c,
        d_in: features.d_in,
    })
}

/// Trains the configured model and writes a run directory into `out`.
pub fn train_run(cfg: &RunConfig, out: &Path) -> Result<(RunConfig, TrainLog)> {
    cfg.validate()?;
    let mut archived = cfg.clone();
    archived.dataset = absolute(&cfg.dataset)?;
    archived.features = cfg.features.as_deref().map(absolute).transpose()?;
    archived.output = PathBuf::new();

    let dataset = load_dataset(&archived.dataset)?;
    let split = dataset.split(archived.t1, archived.t2)?;
    let features = features_of(&archived)?;
    let inputs = ModelInputs::<f32>::build(&dataset, &split, features.as_ref(), &archived)?;
    let ctx = EvalContext::new(&dataset, &split);
    let mut model = AnyModel::new(
        archived.model,
        &inputs,
        &archived.hyper,
        archived.flags,
        archived.seed,
    )?;
    let val = ctx.tasks(Protocol::Intra, Target::Validation).tasks;
    info!(
        "training {} on {} users / {} files",
        archived.tag(),
        dataset.users.len(),
        dataset.files.len()
    );
    let log = train(&mut model, &inputs, &val, &archived.hyper, archived.seed)?;

    fs::create_dir_all(out)?;
    archived.output = absolute(out)?;
    fs::write(out.join(CONFIG_FILE), archived.to_text())?;
    let ck = Checkpoint::new(&archived, &dataset.id_map().hash(), model.params());
    save_checkpoint(out.join(CHECKPOINT_FILE), &ck)?;
    fs::write(
        out.join(LOG_FILE),
        serde_json::to_string_pretty(&log).expect("log serialises"),
    )?;
    Ok((archived, log))
}

/// A trained model rebuilt from its run directory.
pub struct LoadedRun {
    pub cfg: RunConfig,
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub inputs: ModelInputs<f32>,
    pub ctx: EvalContext,
    pub model: AnyModel<f32>,
    /// SHA-256 of the checkpoint bytes.
    pub digest: String,
}

/// Rebuilds the model of `dir`. The checkpoint's own copy of the
/// configuration is authoritative; it is refused unless the dataset it
/// names still has the id map it was trained on.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let ck_path = dir.join(CHECKPOINT_FILE);
    if !ck_path.is_file() {
        return Err(crate::CliError::Usage(format!(
            "{} is not a run directory (no {CHECKPOINT_FILE})",
            dir.display()
        )));
    }
    let bytes = fs::read(&ck_path)?;
    let cfg = Checkpoint::from_bytes(&bytes, &ck_path)?.config;
    let dataset = load_dataset(&cfg.dataset)?;
    let ck = load_checkpoint(&ck_path, &dataset.id_map().hash())?;
    let split = dataset.split(cfg.t1, cfg.t2)?;
    let features = features_of(&cfg)?;
    let inputs = ModelInputs::<f32>::build(&dataset, &split, features.as_ref(), &cfg)?;
    let ctx = EvalContext::new(&dataset, &split);
    let mut model = AnyModel::new(cfg.model, &inputs, &cfg.hyper, cfg.flags, cfg.seed)?;
    ck.restore(model.params_mut())?;
    Ok(LoadedRun {
        cfg,
        dataset,
        split,
        inputs,
        ctx,
        model,
        digest: ck.digest(),
    })
}

impl LoadedRun {
    pub fn evaluate(&self, protocol: Protocol, ks: &[usize]) -> Result<MetricReport> {
        let cfg = RunConfig {
            protocol,
            ks: ks.to_vec(),
            ..self.cfg.clone()
        };
        cfg.validate()?;
        Ok(evaluate_model(&self.model, &self.inputs, &self.ctx, &cfg)?)
    }
}

/// Looks a user up by raw id, then login, then dense index.
pub fn resolve_user(dataset: &Dataset, key: &str) -> Result<usize> {
    if let Some(u) = dataset.find_user(key) {
        return Ok(u);
    }
    match key.parse::<usize>() {
        Ok(u) if u < dataset.users.len() => Ok(u),
        _ => Err(Error::NotFound(format!("user {key:?}")).into()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendItem {
    pub file: String,
    pub repo: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub user: String,
    pub items: Vec<RecommendItem>,
}

/// Frozen embeddings and lookup tables; answers recommendation queries
/// without touching the model again.
pub struct Snapshot {
    pub digest: String,
    pub tag: String,
    dataset: Dataset,
    ctx: EvalContext,
    emb: Embeddings<f32>,
}

impl Snapshot {
    pub fn new(run: LoadedRun) -> Result<Self> {
        let emb = run.model.embeddings(&run.inputs)?;
        Ok(Snapshot {
            digest: run.digest,
            tag: run.cfg.tag(),
            dataset: run.dataset,
            ctx: run.ctx,
            emb,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Snapshot::new(load_run(dir)?)
    }

    pub fn users(&self) -> usize {
        self.dataset.users.len()
    }

    pub fn files(&self) -> usize {
        self.dataset.files.len()
    }

    pub fn query(&self, user: &str, k: usize, scope: Scope) -> Result<RecommendResponse> {
        let u = resolve_user(&self.dataset, user)?;
        let items = recommend(&self.emb, &self.ctx, u, k, scope)?
            .into_iter()
            .map(|r| RecommendItem {
                file: self.dataset.files[r.file].raw_id.clone(),
                repo: self.dataset.repos[r.repo].raw_id.clone(),
                score: r.score,
            })
            .collect();
        Ok(RecommendResponse {
            user: self.dataset.users[u].raw_id.clone(),
            items,
        })
    }
}
