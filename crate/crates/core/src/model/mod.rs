//! The recommendation models, their losses, batch sampling, training and
//! checkpoints.

mod baseline;
mod checkpoint;
mod coder;
mod inputs;
mod loss;
mod sampling;
mod train;

pub use baseline::BaselineModel;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use coder::{CoderForward, CoderModel, MlpParams};
pub use inputs::{tfidf_segments, ModelInputs};
pub use loss::{bpr_loss, info_nce, parameter_norm, total_loss, LossParts, LossWeights};
pub use sampling::{
    draw_excluding, draw_from_range, sample_negatives, Batch, BatchSampler, ProjectTriples,
};
pub use train::{train, EpochLog, TrainLog};

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::config::{AblationFlags, Hyperparams, ModelKind};
use crate::error::Result;
use crate::scalar::Scalar;

/// Final user and file tables; scores are row inner products.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings<T> {
    pub users: Tensor<T>,
    pub files: Tensor<T>,
}

impl<T: Scalar> Embeddings<T> {
    pub fn score(&self, user: usize, file: usize) -> T {
        dot(self.users.row(user), self.files.row(file))
    }

    /// Scores of `user` against every file in `files`.
    pub fn scores(&self, user: usize, files: &[usize]) -> Vec<T> {
        let u = self.users.row(user);
        files.iter().map(|&f| dot(u, self.files.row(f))).collect()
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Content-derived layer-0 rows. They depend on the parameters and the
/// content inputs but not on propagation, so a frozen model computes them
/// once and reuses them for every query.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemFeatures<T> {
    pub files: Tensor<T>,
    /// Repository rows; only CODER has them.
    pub repos: Option<Tensor<T>>,
}

pub trait Recommender<T: Scalar> {
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    /// Records the training objective of one batch on `tape`.
    fn batch_loss(&self, tape: &mut Tape<T>, inputs: &ModelInputs<T>, batch: &Batch)
        -> Result<Var>;
    fn item_features(&self, inputs: &ModelInputs<T>) -> Result<ItemFeatures<T>>;
    /// Propagation and output heads on top of cached item features.
    fn embeddings_with(
        &self,
        inputs: &ModelInputs<T>,
        features: &ItemFeatures<T>,
    ) -> Result<Embeddings<T>>;
    fn embeddings(&self, inputs: &ModelInputs<T>) -> Result<Embeddings<T>> {
        self.embeddings_with(inputs, &self.item_features(inputs)?)
    }
}

/// Any of the three model families behind one type.
#[derive(Clone, Debug)]
pub enum AnyModel<T> {
    Coder(CoderModel<T>),
    Baseline(BaselineModel<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn new(
        kind: ModelKind,
        inputs: &ModelInputs<T>,
        hyper: &Hyperparams,
        flags: AblationFlags,
        seed: u64,
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::Coder => AnyModel::Coder(CoderModel::new(inputs, hyper, flags, seed)?),
            _ => AnyModel::Baseline(BaselineModel::new(kind, inputs, hyper, seed)?),
        })
    }

    fn inner(&self) -> &dyn Recommender<T> {
        match self {
            AnyModel::Coder(m) => m,
            AnyModel::Baseline(m) => m,
        }
    }
}

impl<T: Scalar> Recommender<T> for AnyModel<T> {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn params(&self) -> &ParamStore<T> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            AnyModel::Coder(m) => m.params_mut(),
            AnyModel::Baseline(m) => m.params_mut(),
        }
    }

    fn batch_loss(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        batch: &Batch,
    ) -> Result<Var> {
        self.inner().batch_loss(tape, inputs, batch)
    }

    fn item_features(&self, inputs: &ModelInputs<T>) -> Result<ItemFeatures<T>> {
        self.inner().item_features(inputs)
    }

    fn embeddings_with(
        &self,
        inputs: &ModelInputs<T>,
        features: &ItemFeatures<T>,
    ) -> Result<Embeddings<T>> {
        self.inner().embeddings_with(inputs, features)
    }
}
