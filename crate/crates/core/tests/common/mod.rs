//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use coderec_core::autodiff::Tape;
use coderec_core::config::{ModelKind, RunConfig};
use coderec_core::dataset::synthetic::SyntheticConfig;
use coderec_core::dataset::{Dataset, DatasetSplit};
use coderec_core::model::{Batch, BatchSampler, ModelInputs, Recommender};
use coderec_core::semantics::SegmentFeatures;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Synthetic experiments

/// Settings shared by the synthetic training experiments. Early stopping is
/// off: the full model sits on a plateau for the first few dozen epochs and
/// a patience of 10 ends most runs there.
pub fn synthetic_run(seed: u64, model: ModelKind) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        model,
        ..RunConfig::default()
    };
    cfg.hyper.lr = 3e-3;
    cfg.hyper.batch_size = 32;
    cfg.hyper.epochs = 100;
    cfg.hyper.patience = None;
    cfg
}

pub fn synthetic(seed: u64) -> (SyntheticConfig, Dataset, DatasetSplit) {
    let syn = SyntheticConfig::with_seed(seed);
    let ds = syn.generate();
    let split = ds.split(syn.t1, syn.t2).expect("synthetic split");
    (syn, ds, split)
}

// ---------------------------------------------------------------------------
// Toy instance for gradient checks: 5 users, 8 files, 2 repositories.

pub struct Toy {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub features: SegmentFeatures,
    pub cfg: RunConfig,
}

pub fn toy() -> Toy {
    let syn = SyntheticConfig {
        groups: 1,
        repos_per_group: 2,
        dirs_per_repo: 2,
        files_per_dir: 2,
        users_per_group: 5,
        cold_per_group: 0,
        regular_train: 1,
        cold_train: 1,
        val_commits: 0,
        test_commits: 1,
        tokens_per_file: 12,
        noise_vocabulary: 3,
        seed: 11,
        ..SyntheticConfig::default()
    };
    let dataset = syn.generate();
    let split = dataset.split(syn.t1, syn.t2).expect("toy split");
    let mut cfg = RunConfig::default();
    let h = &mut cfg.hyper;
    h.d = 4;
    h.layers = 2;
    h.n_c = 2;
    h.n_q = 2;
    h.n_h = 3;
    h.lambda1 = 0.5;
    h.lambda2 = 0.5;
    h.lambda3 = 0.01;
    h.tau = 0.5;
    h.eta = 2;
    let features = syn.segment_features(&dataset, h.n_c, 5);
    Toy {
        dataset,
        split,
        features,
        cfg,
    }
}

/// One batch holding every train positive of the toy instance.
pub fn full_batch(inputs: &ModelInputs<f64>, seed: u64) -> Batch {
    let project: Vec<_> = inputs.project.iter().map(|(_, m)| m.clone()).collect();
    let sampler = BatchSampler::new(
        &inputs.y,
        &project,
        &inputs.file_repo,
        inputs.dims.repos,
        4096,
        false,
    );
    let (mut batches, _) = sampler.epoch(&mut ChaCha8Rng::seed_from_u64(seed));
    assert_eq!(batches.len(), 1);
    batches.remove(0)
}

/// Per-tensor gradient check against central differences.
pub struct GradCheck {
    pub name: String,
    pub scalars: usize,
    /// `|g - fd| / max(|g|, |fd|, 1e-6)` over the tensor's flattened values.
    /// The floor keeps tensors whose true gradient is zero, such as an output
    /// bias that cancels in every score difference, from dividing noise by
    /// noise.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

pub fn loss_value<M: Recommender<f64>>(model: &M, inputs: &ModelInputs<f64>, batch: &Batch) -> f64 {
    let mut tape = Tape::new();
    let loss = model.batch_loss(&mut tape, inputs, batch).expect("loss");
    tape.value(loss).item()
}

pub fn gradient_check<M: Recommender<f64>>(
    model: &mut M,
    inputs: &ModelInputs<f64>,
    batch: &Batch,
    step: f64,
) -> Vec<GradCheck> {
    let mut tape = Tape::new();
    let loss = model.batch_loss(&mut tape, inputs, batch).expect("loss");
    let analytic = tape
        .backward(loss)
        .expect("backward")
        .for_params(model.params());
    let ids: Vec<_> = model.params().ids().collect();
    let mut out = Vec::new();
    for (id, g) in ids.into_iter().zip(analytic) {
        let n = model.params().get(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params().get(id).data()[i];
            model.params_mut().get_mut(id).data_mut()[i] = orig + step;
            let up = loss_value(model, inputs, batch);
            model.params_mut().get_mut(id).data_mut()[i] = orig - step;
            let down = loss_value(model, inputs, batch);
            model.params_mut().get_mut(id).data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let diff = norm(g.data().iter().zip(&numeric).map(|(a, b)| a - b));
        let scale = norm(g.data().iter().copied())
            .max(norm(numeric.iter().copied()))
            .max(1e-6);
        out.push(GradCheck {
            name: model.params().name(id).to_string(),
            scalars: n,
            rel_error: diff / scale,
            analytic_norm: norm(g.data().iter().copied()),
        });
    }
    out
}

fn norm(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Dense propagation oracle

pub type Dense = Vec<Vec<f64>>;

/// `D^{-1/2} A D^{-1/2}` of the bipartite graph with `users + items` nodes.
pub fn dense_normalized(users: usize, items: usize, edges: &[(usize, usize)]) -> Dense {
    let n = users + items;
    let mut a = vec![vec![0.0; n]; n];
    for &(u, i) in edges {
        a[u][users + i] = 1.0;
        a[users + i][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    for (r, row) in a.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            if *x != 0.0 {
                *x /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

pub fn dense_matmul(a: &Dense, b: &Dense) -> Dense {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| row.iter().zip(b).map(|(x, br)| x * br[c]).sum())
                .collect()
        })
        .collect()
}

/// Layers `0..=layers` and their mean.
pub fn dense_propagate(adj: &Dense, e0: &Dense, layers: usize) -> (Vec<Dense>, Dense) {
    let mut stack = vec![e0.clone()];
    for _ in 0..layers {
        let next = dense_matmul(adj, stack.last().unwrap());
        stack.push(next);
    }
    let mut mean = vec![vec![0.0; e0[0].len()]; e0.len()];
    for layer in &stack {
        for (m, r) in mean.iter_mut().zip(layer) {
            for (x, y) in m.iter_mut().zip(r) {
                *x += y;
            }
        }
    }
    let n = stack.len() as f64;
    for row in &mut mean {
        for x in row {
            *x /= n;
        }
    }
    (stack, mean)
}

// ---------------------------------------------------------------------------
// Definitional ranking metrics

/// `(ndcg, hit, mrr, recall)` straight from the definitions.
pub fn oracle_metrics(ranked: &[usize], relevant: &BTreeSet<usize>, k: usize) -> [f64; 4] {
    let top: Vec<usize> = ranked.iter().copied().take(k).collect();
    let gains: Vec<bool> = top.iter().map(|i| relevant.contains(i)).collect();
    let mut dcg = 0.0;
    for (pos, &g) in gains.iter().enumerate() {
        let rank = pos + 1;
        if g {
            dcg += 1.0 / ((rank + 1) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for rank in 1..=relevant.len().min(k) {
        idcg += 1.0 / ((rank + 1) as f64).log2();
    }
    let found = gains.iter().filter(|&&g| g).count();
    let hit = if found > 0 { 1.0 } else { 0.0 };
    let mrr = match gains.iter().position(|&g| g) {
        Some(p) => 1.0 / (p + 1) as f64,
        None => 0.0,
    };
    [dcg / idcg, hit, mrr, found as f64 / relevant.len() as f64]
}

// ---------------------------------------------------------------------------
// Co-attention written out line by line

pub struct FusionDraw {
    pub c: Dense,
    pub q: Dense,
    pub w_o: Dense,
    pub w_c: Dense,
    pub w_q: Dense,
    pub w_h: Vec<f64>,
}

/// Returns `(h, a)`.
pub fn transcribed_fusion(x: &FusionDraw) -> (Vec<f64>, Vec<f64>) {
    let (n_c, n_q, d, n_h) = (x.c.len(), x.q.len(), x.c[0].len(), x.w_h.len());
    // L = tanh(C W_O Q^T)
    let mut l = vec![vec![0.0; n_q]; n_c];
    for i in 0..n_c {
        for k in 0..n_q {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    s += x.c[i][a] * x.w_o[a][b] * x.q[k][b];
                }
            }
            l[i][k] = f64::tanh(s);
        }
    }
    // H = tanh(W_C C^T + W_Q (L Q)^T)
    let mut lq = vec![vec![0.0; d]; n_c];
    for i in 0..n_c {
        for b in 0..d {
            for k in 0..n_q {
                lq[i][b] += l[i][k] * x.q[k][b];
            }
        }
    }
    let mut h_map = vec![vec![0.0; n_c]; n_h];
    for r in 0..n_h {
        for i in 0..n_c {
            let mut s = 0.0;
            for b in 0..d {
                s += x.w_c[r][b] * x.c[i][b] + x.w_q[r][b] * lq[i][b];
            }
            h_map[r][i] = f64::tanh(s);
        }
    }
    // a = softmax(w_H^T H)
    let logits: Vec<f64> = (0..n_c)
        .map(|i| (0..n_h).map(|r| x.w_h[r] * h_map[r][i]).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let a: Vec<f64> = exps.iter().map(|e| e / total).collect();
    // h = a^T C
    let mut h = vec![0.0; d];
    for i in 0..n_c {
        for b in 0..d {
            h[b] += a[i] * x.c[i][b];
        }
    }
    (h, a)
}
