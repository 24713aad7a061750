use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{xavier_init_with, ParamId, ParamStore, Tape, Tensor, Var};
use crate::behavior::{pool_layers, propagate};
use crate::config::{Hyperparams, ModelKind};
use crate::error::{Error, Result};
use crate::model::loss::{bpr_loss, parameter_norm};
use crate::model::{Batch, Embeddings, ItemFeatures, ModelInputs, Recommender};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
struct BaselineIds {
    user: ParamId,
    file: ParamId,
    user_repo: ParamId,
    file_repo: ParamId,
    segment: ParamId,
}

/// Matrix factorisation and LightGCN over ID embeddings plus the same side
/// information CODER sees: interacted repositories for users, the owning
/// repository and the mean segment feature for files.
#[derive(Clone, Debug)]
pub struct BaselineModel<T> {
    kind: ModelKind,
    params: ParamStore<T>,
    hyper: Hyperparams,
    ids: BaselineIds,
    mean_segments: Tensor<T>,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn new(
        kind: ModelKind,
        inputs: &ModelInputs<T>,
        hyper: &Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        if kind == ModelKind::Coder {
            return Err(Error::Config(
                "BaselineModel covers mf and lightgcn only".into(),
            ));
        }
        let d = hyper.d;
        let dims = inputs.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids = BaselineIds {
            user: store.add("embed.user", xavier_init_with(dims.users, d, &mut rng)),
            file: store.add("embed.file", xavier_init_with(dims.files, d, &mut rng)),
            user_repo: store.add("side.user_repo", xavier_init_with(dims.repos, d, &mut rng)),
            file_repo: store.add("side.file_repo", xavier_init_with(dims.repos, d, &mut rng)),
            segment: store.add("side.segment", xavier_init_with(inputs.d_in(), d, &mut rng)),
        };
        Ok(BaselineModel {
            kind,
            params: store,
            hyper: hyper.clone(),
            ids,
            mean_segments: inputs.mean_segments(),
        })
    }

    fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .ids()
            .map(|id| tape.param(&self.params, id))
            .collect()
    }

    /// Projected mean segment features, `files x d`.
    fn segment_rows(&self, tape: &mut Tape<T>, p: &[Var]) -> Result<Var> {
        let seg = tape.constant(self.mean_segments.clone());
        tape.matmul(seg, p[self.ids.segment.index()])
    }

    /// Final user and file tables plus the bound parameter leaves.
    fn forward(&self, tape: &mut Tape<T>, inputs: &ModelInputs<T>) -> Result<(Var, Var, Vec<Var>)> {
        let p = self.bind(tape);
        let fs = self.segment_rows(tape, &p)?;
        self.forward_from(tape, inputs, p, fs)
    }

    fn forward_from(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        p: Vec<Var>,
        fs: Var,
    ) -> Result<(Var, Var, Vec<Var>)> {
        let ur = tape.sparse_matmul(&inputs.user_repos, p[self.ids.user_repo.index()])?;
        let u0 = tape.add(p[self.ids.user.index()], ur)?;
        let fr = tape.sparse_matmul(&inputs.file_onehot, p[self.ids.file_repo.index()])?;
        let v0 = tape.add(p[self.ids.file.index()], fr)?;
        let v0 = tape.add(v0, fs)?;
        if self.kind == ModelKind::Mf {
            return Ok((u0, v0, p));
        }
        let e0 = tape.concat_rows(&[u0, v0])?;
        let stack = propagate(tape, e0, &inputs.file_adjacency, self.hyper.layers)?;
        let pooled = pool_layers(tape, &stack)?;
        let users: Vec<usize> = (0..inputs.dims.users).collect();
        let files: Vec<usize> =
            (inputs.dims.users..inputs.dims.users + inputs.dims.files).collect();
        let u = tape.gather_rows(pooled, &users)?;
        let v = tape.gather_rows(pooled, &files)?;
        Ok((u, v, p))
    }
}

impl<T: Scalar> Recommender<T> for BaselineModel<T> {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn batch_loss(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        batch: &Batch,
    ) -> Result<Var> {
        let (u, v, p) = self.forward(tape, inputs)?;
        let bu = tape.gather_rows(u, &batch.users)?;
        let bp = tape.gather_rows(v, &batch.positives)?;
        let bn = tape.gather_rows(v, &batch.negatives)?;
        let sp = tape.row_dot(bu, bp)?;
        let sn = tape.row_dot(bu, bn)?;
        let file = bpr_loss(tape, sp, sn)?;
        if self.hyper.lambda3 == 0.0 {
            return Ok(file);
        }
        let norm = parameter_norm(tape, &p)?;
        let norm = tape.scale(norm, T::lit(self.hyper.lambda3));
        let both = tape.concat_rows(&[file, norm])?;
        Ok(tape.sum_all(both))
    }

    fn item_features(&self, inputs: &ModelInputs<T>) -> Result<ItemFeatures<T>> {
        let _ = inputs;
        let mut tape = Tape::inference();
        let p = self.bind(&mut tape);
        let fs = self.segment_rows(&mut tape, &p)?;
        Ok(ItemFeatures {
            files: tape.value(fs).clone(),
            repos: None,
        })
    }

    fn embeddings_with(
        &self,
        inputs: &ModelInputs<T>,
        features: &ItemFeatures<T>,
    ) -> Result<Embeddings<T>> {
        let mut tape = Tape::inference();
        let p = self.bind(&mut tape);
        let fs = tape.constant(features.files.clone());
        let (u, v, _) = self.forward_from(&mut tape, inputs, p, fs)?;
        Ok(Embeddings {
            users: tape.value(u).clone(),
            files: tape.value(v).clone(),
        })
    }
}
