use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{xavier_init_with, ParamId, ParamStore, Tape, Tensor, Var};
use crate::behavior::{pool_layers, propagate};
use crate::config::{AblationFlags, Aggregation, Hyperparams, ModelKind};
use crate::error::{Error, Result};
use crate::model::loss::{bpr_loss, info_nce, parameter_norm, total_loss, LossParts, LossWeights};
use crate::model::{Batch, Embeddings, ItemFeatures, ModelInputs, Recommender};
use crate::scalar::Scalar;
use crate::semantics::{
    coattention_fuse_batched, structural_aggregate, FusionParams, FusionVars, GatParams,
    ATTENTION_SLOPE,
};

/// Two-layer head `[x ‖ side] → d → d` with a leaky-relu hidden layer. The
/// first layer is stored as two blocks so the side block can be left out
/// when the side input is the zero vector. The file head has no output bias:
/// a shift shared by every file cancels in each pairwise score difference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpParams {
    pub w_self: ParamId,
    pub w_side: Option<ParamId>,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: Option<ParamId>,
}

impl MlpParams {
    fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        side: bool,
        output_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        // One 2d x d Glorot draw split in two keeps the bound of the stacked
        // matrix whether or not the side block is kept.
        let w1: Tensor<T> = xavier_init_with(2 * d, d, rng);
        let top = Tensor::from_vec(d, d, w1.data()[..d * d].to_vec()).expect("d x d");
        let bottom = Tensor::from_vec(d, d, w1.data()[d * d..].to_vec()).expect("d x d");
        MlpParams {
            w_self: store.add(format!("{name}.w1_self"), top),
            w_side: side.then(|| store.add(format!("{name}.w1_side"), bottom)),
            b1: store.add(format!("{name}.b1"), Tensor::zeros(1, d)),
            w2: store.add(format!("{name}.w2"), xavier_init_with(d, d, rng)),
            b2: output_bias.then(|| store.add(format!("{name}.b2"), Tensor::zeros(1, d))),
        }
    }

    fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
        side: Option<Var>,
    ) -> Result<Var> {
        let mut pre = tape.matmul(x, p[self.w_self.index()])?;
        if let (Some(w), Some(s)) = (self.w_side, side) {
            let t = tape.matmul(s, p[w.index()])?;
            pre = tape.add(pre, t)?;
        }
        let pre = tape.add_row(pre, p[self.b1.index()])?;
        let hidden = tape.leaky_relu(pre, T::lit(ATTENTION_SLOPE));
        let out = tape.matmul(hidden, p[self.w2.index()])?;
        match self.b2 {
            Some(b) => tape.add_row(out, p[b.index()]),
            None => Ok(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct CoderIds {
    user: ParamId,
    p_in: ParamId,
    fusion: Option<FusionParams>,
    p_dir: Option<ParamId>,
    p_repo: ParamId,
    gat: Option<GatParams>,
    mlp_u: MlpParams,
    mlp_v: MlpParams,
}

/// The full graph model with its ablation switches.
#[derive(Clone, Debug)]
pub struct CoderModel<T> {
    params: ParamStore<T>,
    hyper: Hyperparams,
    flags: AblationFlags,
    ids: CoderIds,
}

/// Tape handles of one full forward pass.
#[derive(Clone, Debug)]
pub struct CoderForward {
    pub params: Vec<Var>,
    /// File-level layer stack over users then files.
    pub file_stack: Vec<Var>,
    /// `E★`, `(users + files) x d`.
    pub file_pooled: Var,
    /// `Z★_t` per behavior, `(users + repos) x d`.
    pub project_pooled: Vec<Var>,
    /// Behavior-aggregated `Z★`, absent with the project level disabled.
    pub project_agg: Option<Var>,
}

impl<T: Scalar> CoderModel<T> {
    pub fn new(
        inputs: &ModelInputs<T>,
        hyper: &Hyperparams,
        flags: AblationFlags,
        seed: u64,
    ) -> Result<Self> {
        if !flags.disable_project_level && inputs.project.is_empty() {
            return Err(Error::Config(
                "project level enabled with an empty behavior set".into(),
            ));
        }
        let d = hyper.d;
        let dims = inputs.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let user = store.add("embed.user", xavier_init_with(dims.users, d, &mut rng));
        let p_in = store.add("fusion.p_in", xavier_init_with(inputs.d_in(), d, &mut rng));
        let fusion = (!flags.disable_fusion)
            .then(|| FusionParams::register(&mut store, d, hyper.n_h, &mut rng));
        let p_dir = (!flags.disable_structural).then(|| {
            store.add(
                "structure.p_dir",
                xavier_init_with(inputs.dir_features.cols(), d, &mut rng),
            )
        });
        let p_repo = store.add(
            "structure.p_repo",
            xavier_init_with(inputs.repo_features.cols(), d, &mut rng),
        );
        let gat = (!flags.disable_structural).then(|| GatParams::register(&mut store, d, &mut rng));
        let side = !flags.disable_project_level;
        let mlp_u = MlpParams::register(&mut store, "mlp_u", d, side, true, &mut rng);
        let mlp_v = MlpParams::register(&mut store, "mlp_v", d, side, false, &mut rng);
        Ok(CoderModel {
            params: store,
            hyper: hyper.clone(),
            flags,
            ids: CoderIds {
                user,
                p_in,
                fusion,
                p_dir,
                p_repo,
                gat,
                mlp_u,
                mlp_v,
            },
        })
    }

    pub fn flags(&self) -> AblationFlags {
        self.flags
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    /// Fused file representations `h`, `files x d`.
    fn file_semantics(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        p: &[Var],
    ) -> Result<Var> {
        let segs = tape.constant(inputs.segments.clone());
        let c = tape.matmul(segs, p[self.ids.p_in.index()])?;
        match &self.ids.fusion {
            None => tape.sparse_matmul(&inputs.segment_mean, c),
            Some(f) => {
                let vars = FusionVars {
                    w_o: p[f.w_o.index()],
                    w_c: p[f.w_c.index()],
                    w_q: p[f.w_q.index()],
                    w_h: p[f.w_h.index()],
                };
                // Historical users index into [user table; zero row].
                let zero = tape.constant(Tensor::zeros(1, self.hyper.d));
                let table = tape.concat_rows(&[p[self.ids.user.index()], zero])?;
                let q = tape.gather_rows(table, &inputs.history)?;
                Ok(coattention_fuse_batched(tape, c, q, inputs.n_c, inputs.n_q, &vars)?.h)
            }
        }
    }

    /// Layer-0 file rows `v0` and repository rows `r0`.
    fn structure(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        p: &[Var],
        h: Var,
    ) -> Result<(Var, Var)> {
        let repo_feat = tape.constant(inputs.repo_features.clone());
        let x_repo = tape.matmul(repo_feat, p[self.ids.p_repo.index()])?;
        let (Some(gat), Some(p_dir)) = (&self.ids.gat, self.ids.p_dir) else {
            return Ok((h, x_repo));
        };
        let dir_feat = tape.constant(inputs.dir_features.clone());
        let x_dir = tape.matmul(dir_feat, p[p_dir.index()])?;
        let x = tape.concat_rows(&[h, x_dir, x_repo])?;
        let layers: Vec<_> = gat
            .layers
            .iter()
            .map(|l| crate::semantics::GatLayerVars {
                w: p[l.w.index()],
                a_src: p[l.a_src.index()],
                a_dst: p[l.a_dst.index()],
            })
            .collect();
        let out = structural_aggregate(tape, x, &inputs.forest.adjacency, &layers)?;
        let files: Vec<usize> = (0..inputs.forest.n_files).collect();
        let v0 = tape.gather_rows(out, &files)?;
        let r0 = tape.gather_rows(out, &inputs.forest.root_rows())?;
        Ok((v0, r0))
    }

    fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .ids()
            .map(|id| tape.param(&self.params, id))
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape<T>, inputs: &ModelInputs<T>) -> Result<CoderForward> {
        let p = self.bind(tape);
        let h = self.file_semantics(tape, inputs, &p)?;
        let (v0, r0) = self.structure(tape, inputs, &p, h)?;
        self.forward_from(tape, inputs, p, v0, r0)
    }

    /// Behavior propagation from given layer-0 file and repository rows.
    pub fn forward_from(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        p: Vec<Var>,
        v0: Var,
        r0: Var,
    ) -> Result<CoderForward> {
        let users = p[self.ids.user.index()];

        let e0 = tape.concat_rows(&[users, v0])?;
        let file_stack = propagate(tape, e0, &inputs.file_adjacency, self.hyper.layers)?;
        let file_pooled = pool_layers(tape, &file_stack)?;

        let mut project_pooled = Vec::new();
        let mut project_agg = None;
        if !self.flags.disable_project_level {
            let z0 = tape.concat_rows(&[users, r0])?;
            for adj in &inputs.project_adjacency {
                let stack = propagate(tape, z0, adj, self.hyper.layers)?;
                project_pooled.push(pool_layers(tape, &stack)?);
            }
            let mean = tape.mean_over(&project_pooled)?;
            project_agg = Some(match self.hyper.aggregation {
                Aggregation::Mean => mean,
                Aggregation::Sum => tape.scale(mean, T::from_usize_lossy(project_pooled.len())),
            });
        }
        Ok(CoderForward {
            params: p,
            file_stack,
            file_pooled,
            project_pooled,
            project_agg,
        })
    }

    /// Final `u_i` rows for `users` and `v_j` rows for `files`.
    pub fn heads(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        fwd: &CoderForward,
        users: &[usize],
        files: &[usize],
    ) -> Result<(Var, Var)> {
        let n_users = inputs.dims.users;
        let file_rows: Vec<usize> = files.iter().map(|&f| n_users + f).collect();
        let u_star = tape.gather_rows(fwd.file_pooled, users)?;
        let v_star = tape.gather_rows(fwd.file_pooled, &file_rows)?;
        let (z, r) = match fwd.project_agg {
            Some(agg) => {
                let repo_rows: Vec<usize> = files
                    .iter()
                    .map(|&f| n_users + inputs.file_repo[f])
                    .collect();
                (
                    Some(tape.gather_rows(agg, users)?),
                    Some(tape.gather_rows(agg, &repo_rows)?),
                )
            }
            None => (None, None),
        };
        let u = self.ids.mlp_u.apply(tape, &fwd.params, u_star, z)?;
        let v = self.ids.mlp_v.apply(tape, &fwd.params, v_star, r)?;
        Ok((u, v))
    }

    /// All loss components of one batch.
    pub fn loss_parts(
        &self,
        tape: &mut Tape<T>,
        inputs: &ModelInputs<T>,
        batch: &Batch,
    ) -> Result<LossParts> {
        let fwd = self.forward(tape, inputs)?;
        let n = batch.len();
        let mut files = batch.positives.clone();
        files.extend_from_slice(&batch.negatives);
        let (u, v) = self.heads(tape, inputs, &fwd, &batch.users, &files)?;
        let pos_rows: Vec<usize> = (0..n).collect();
        let neg_rows: Vec<usize> = (n..2 * n).collect();
        let v_pos = tape.gather_rows(v, &pos_rows)?;
        let v_neg = tape.gather_rows(v, &neg_rows)?;
        let s_pos = tape.row_dot(u, v_pos)?;
        let s_neg = tape.row_dot(u, v_neg)?;
        let file = bpr_loss(tape, s_pos, s_neg)?;

        let mut project = Vec::new();
        if !self.flags.disable_project_level {
            let n_users = inputs.dims.users;
            for (z, triples) in fwd.project_pooled.iter().zip(&batch.project) {
                if triples.users.is_empty() {
                    continue;
                }
                let zu = tape.gather_rows(*z, &triples.users)?;
                let rp: Vec<usize> = triples.positives.iter().map(|&k| n_users + k).collect();
                let rn: Vec<usize> = triples.negatives.iter().map(|&k| n_users + k).collect();
                let rp = tape.gather_rows(*z, &rp)?;
                let rn = tape.gather_rows(*z, &rn)?;
                let sp = tape.row_dot(zu, rp)?;
                let sn = tape.row_dot(zu, rn)?;
                project.push(bpr_loss(tape, sp, sn)?);
            }
        }

        let contrastive = if self.flags.disable_contrastive {
            None
        } else {
            let eta = self.hyper.eta;
            let tau = T::lit(self.hyper.tau);
            let (e0, e_eta) = (fwd.file_stack[0], fwd.file_stack[eta]);
            let users = batch.distinct_users();
            let file_rows: Vec<usize> = batch
                .distinct_positives()
                .iter()
                .map(|&f| inputs.dims.users + f)
                .collect();
            let mut side = |rows: &[usize]| -> Result<Var> {
                let a = tape.gather_rows(e_eta, rows)?;
                let b = tape.gather_rows(e0, rows)?;
                info_nce(tape, a, b, tau)
            };
            let cu = side(&users)?;
            let cv = side(&file_rows)?;
            Some((cu, cv))
        };

        let norm = Some(parameter_norm(tape, &fwd.params)?);
        Ok(LossParts {
            file,
            project,
            contrastive,
            norm,
        })
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.hyper.lambda1,
            lambda2: self.hyper.lambda2,
            lambda3: self.hyper.lambda3,
        }
    }
}

impl<T: Scalar> Recommender<T> for CoderModel<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Coder
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
        let parts = self.loss_parts(tape, inputs, batch)?;
        total_loss(tape, &parts, self.loss_weights())
    }

    fn item_features(&self, inputs: &ModelInputs<T>) -> Result<ItemFeatures<T>> {
        let mut tape = Tape::inference();
        let p = self.bind(&mut tape);
        let h = self.file_semantics(&mut tape, inputs, &p)?;
        let (v0, r0) = self.structure(&mut tape, inputs, &p, h)?;
        Ok(ItemFeatures {
            files: tape.value(v0).clone(),
            repos: Some(tape.value(r0).clone()),
        })
    }

    fn embeddings_with(
        &self,
        inputs: &ModelInputs<T>,
        features: &ItemFeatures<T>,
    ) -> Result<Embeddings<T>> {
        let repos = features
            .repos
            .clone()
            .ok_or_else(|| Error::Config("CODER item features need repository rows".into()))?;
        let mut tape = Tape::inference();
        let p = self.bind(&mut tape);
        let v0 = tape.constant(features.files.clone());
        let r0 = tape.constant(repos);
        let fwd = self.forward_from(&mut tape, inputs, p, v0, r0)?;
        let users: Vec<usize> = (0..inputs.dims.users).collect();
        let files: Vec<usize> = (0..inputs.dims.files).collect();
        let (u, v) = self.heads(&mut tape, inputs, &fwd, &users, &files)?;
        Ok(Embeddings {
            users: tape.value(u).clone(),
            files: tape.value(v).clone(),
        })
    }
}
