use std::collections::BTreeSet;
use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::behavior::normalize_adjacency;
use crate::config::RunConfig;
use crate::dataset::{build_interaction_matrices, Behavior, Dataset, DatasetSplit, Dims};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::semantics::{
    build_structure_forest, encode_segments_tfidf, encode_structure_features,
    sample_historical_users, segment_code, tokenize, SegmentFeatures, StructureForest, Vocabulary,
};

/// Everything a model reads besides its parameters, derived once from a
/// dataset, its split, and the run configuration.
#[derive(Clone, Debug)]
pub struct ModelInputs<T> {
    pub dims: Dims,
    pub file_repo: Vec<usize>,
    /// Train user × file matrix.
    pub y: SparseMatrix<f64>,
    /// Train user × repo matrix per behavior of the configured set, in order.
    pub project: Vec<(Behavior, SparseMatrix<f64>)>,
    /// Â over users then files.
    pub file_adjacency: Arc<SparseMatrix<T>>,
    /// Λ̂_t over users then repos, aligned with `project`.
    pub project_adjacency: Vec<Arc<SparseMatrix<T>>>,
    pub n_c: usize,
    pub n_q: usize,
    /// `files * n_c x d_in` segment features, file-major.
    pub segments: Tensor<T>,
    /// `files x files * n_c` averaging of each file's segment rows.
    pub segment_mean: Arc<SparseMatrix<T>>,
    /// `files * n_q` rows into `[user table; zero row]`; index `users` is the
    /// zero row used for files without train contributors.
    pub history: Vec<usize>,
    pub forest: StructureForest<T>,
    pub dir_features: Tensor<T>,
    pub repo_features: Tensor<T>,
    /// Train-interacted repositories per user.
    pub interacted: Vec<BTreeSet<usize>>,
    /// `users x repos` multi-hot of `interacted`.
    pub user_repos: Arc<SparseMatrix<T>>,
    /// `files x repos` one-hot of each file's repository.
    pub file_onehot: Arc<SparseMatrix<T>>,
}

impl<T: Scalar> ModelInputs<T> {
    pub fn d_in(&self) -> usize {
        self.segments.cols()
    }

    /// `pretrained` is ignored when the configuration asks for TF-IDF
    /// features; without it TF-IDF is always used.
    pub fn build(
        dataset: &Dataset,
        split: &DatasetSplit,
        pretrained: Option<&SegmentFeatures>,
        cfg: &RunConfig,
    ) -> Result<Self> {
        let dims = dataset.dims();
        let h = &cfg.hyper;
        let file_repo = dataset.file_repo();
        let matrices = build_interaction_matrices(split, dims)?;

        let project: Vec<(Behavior, SparseMatrix<f64>)> =
            h.behaviors
                .iter()
                .map(|&b| {
                    let m = matrices.project_level(b).cloned().ok_or_else(|| {
                        Error::Config(format!("{b} is not a project-level behavior"))
                    })?;
                    Ok((b, m))
                })
                .collect::<Result<_>>()?;
        let file_adjacency = normalize_adjacency(&matrices.y);
        let project_adjacency = project
            .iter()
            .map(|(_, m)| normalize_adjacency(m))
            .collect();

        let segments = match pretrained {
            Some(features) if !cfg.flags.tfidf_features => {
                if features.n_segments != h.n_c {
                    return Err(Error::Config(format!(
                        "feature file has {} segments per file, configuration expects {}",
                        features.n_segments, h.n_c
                    )));
                }
                features.aligned(dataset)
            }
            _ => tfidf_segments(dataset, &matrices.y, h.n_c, h.tfidf_vocabulary),
        };
        let files = dims.files;
        let segment_mean = Arc::new(SparseMatrix::from_triplets(
            files,
            files * h.n_c,
            (0..files * h.n_c).map(|r| (r / h.n_c, r, T::one() / T::from_usize_lossy(h.n_c))),
        )?);

        let contributors = matrices.y.transpose();
        let mut history = Vec::with_capacity(files * h.n_q);
        for f in 0..files {
            let sample = sample_historical_users(f, &contributors, h.n_q, cfg.seed);
            if sample.users.is_empty() {
                history.extend(std::iter::repeat(dims.users).take(h.n_q));
            } else {
                history.extend(sample.users);
            }
        }

        let forest = build_structure_forest(dataset);
        let structure = encode_structure_features(dataset);
        let interacted = split.interacted_repos(&file_repo, dims.users);
        let user_repos = Arc::new(SparseMatrix::binary(
            dims.users,
            dims.repos,
            interacted
                .iter()
                .enumerate()
                .flat_map(|(u, rs)| rs.iter().map(move |&r| (u, r))),
        )?);
        let file_onehot = Arc::new(SparseMatrix::binary(
            files,
            dims.repos,
            file_repo.iter().enumerate().map(|(f, &r)| (f, r)),
        )?);

        Ok(ModelInputs {
            dims,
            file_repo,
            y: matrices.y,
            project,
            file_adjacency,
            project_adjacency,
            n_c: h.n_c,
            n_q: h.n_q,
            segments,
            segment_mean,
            history,
            forest,
            dir_features: structure.dirs,
            repo_features: structure.repos,
            interacted,
            user_repos,
            file_onehot,
        })
    }

    /// Mean segment feature per file, `files x d_in`.
    pub fn mean_segments(&self) -> Tensor<T> {
        self.segment_mean
            .matmul_dense(&self.segments)
            .expect("segment_mean matches segments")
    }
}

/// TF-IDF segment features. The vocabulary is built from files with at least
/// one train commit, so test-only files contribute no terms.
pub fn tfidf_segments<T: Scalar>(
    dataset: &Dataset,
    y: &SparseMatrix<f64>,
    n_c: usize,
    max_vocab: usize,
) -> Tensor<T> {
    let tokens: Vec<Vec<String>> = dataset
        .files
        .iter()
        .map(|f| f.content.as_deref().map(tokenize).unwrap_or_default())
        .collect();
    let trained: BTreeSet<usize> = y.indices().iter().copied().collect();
    let vocab = Vocabulary::build(trained.iter().map(|&f| &tokens[f]), Some(max_vocab));
    let mut out = Tensor::zeros(dataset.files.len() * n_c, vocab.len());
    for (f, toks) in tokens.iter().enumerate() {
        let m: Tensor<T> = encode_segments_tfidf(&segment_code(toks, n_c), &vocab);
        for i in 0..n_c {
            out.row_mut(f * n_c + i).copy_from_slice(m.row(i));
        }
    }
    out
}
