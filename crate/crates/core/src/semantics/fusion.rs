//! Code–user co-attention: a file's segment features attend to its
//! historical contributors through an affinity matrix, and the resulting
//! attention over segments pools the segment features into one vector.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{xavier_init_with, ParamId, ParamStore, SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Trainable weights: `W_O (d x d)`, `W_C (n_h x d)`, `W_Q (n_h x d)`,
/// `w_H (n_h x 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionParams {
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub w_q: ParamId,
    pub w_h: ParamId,
}

/// The same weights recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    pub w_o: Var,
    pub w_c: Var,
    pub w_q: Var,
    pub w_h: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Fused {
    /// `1 x d` pooled file representation.
    pub h: Var,
    /// `1 x n_c` attention over segments.
    pub attention: Var,
}

impl FusionParams {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        d: usize,
        n_h: usize,
        rng: &mut R,
    ) -> Self {
        FusionParams {
            w_o: store.add("fusion.w_o", xavier_init_with(d, d, rng)),
            w_c: store.add("fusion.w_c", xavier_init_with(n_h, d, rng)),
            w_q: store.add("fusion.w_q", xavier_init_with(n_h, d, rng)),
            w_h: store.add("fusion.w_h", xavier_init_with(n_h, 1, rng)),
        }
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> FusionVars {
        FusionVars {
            w_o: tape.param(store, self.w_o),
            w_c: tape.param(store, self.w_c),
            w_q: tape.param(store, self.w_q),
            w_h: tape.param(store, self.w_h),
        }
    }
}

/// `L = tanh(C W_O Qᵀ)`, `H = tanh(W_C Cᵀ + W_Q (L Q)ᵀ)`,
/// `a = softmax(w_Hᵀ H)`, `h = a C`.
///
/// `c` is `n_c x d` (already projected), `q` is `n_q x d`.
pub fn coattention_fuse<T: Scalar>(
    tape: &mut Tape<T>,
    c: Var,
    q: Var,
    p: &FusionVars,
) -> Result<Fused> {
    let cw = tape.matmul(c, p.w_o)?;
    let qt = tape.transpose(q);
    let affinity_pre = tape.matmul(cw, qt)?;
    let affinity = tape.tanh(affinity_pre);
    let lq = tape.matmul(affinity, q)?;

    let ct = tape.transpose(c);
    let code_term = tape.matmul(p.w_c, ct)?;
    let lqt = tape.transpose(lq);
    let user_term = tape.matmul(p.w_q, lqt)?;
    let pre = tape.add(code_term, user_term)?;
    let map = tape.tanh(pre);

    let wht = tape.transpose(p.w_h);
    let logits = tape.matmul(wht, map)?;
    let attention = tape.softmax_rows(logits);
    let h = tape.matmul(attention, c)?;
    Ok(Fused { h, attention })
}

/// Co-attention for many files at once. `c` stacks each file's `n_c`
/// segment rows (`files * n_c x d`) and `q` each file's `n_q` user rows
/// (`files * n_q x d`). Returns `h` as `files x d` and the attention as
/// `files x n_c`; row `f` equals [`coattention_fuse`] on file `f`'s blocks.
pub fn coattention_fuse_batched<T: Scalar>(
    tape: &mut Tape<T>,
    c: Var,
    q: Var,
    n_c: usize,
    n_q: usize,
    p: &FusionVars,
) -> Result<Fused> {
    let [rows, _] = tape.shape(c);
    let files = if n_c == 0 { 0 } else { rows / n_c };
    if files * n_c != rows || tape.shape(q)[0] != files * n_q {
        return Err(Error::shape(
            "coattention_fuse_batched",
            &tape.shape(c),
            &tape.shape(q),
        ));
    }
    // One row per (file, segment, user) triple.
    let triples = files * n_c * n_q;
    let mut seg_index = Vec::with_capacity(triples);
    let mut user_index = Vec::with_capacity(triples);
    for f in 0..files {
        for i in 0..n_c {
            for k in 0..n_q {
                seg_index.push(f * n_c + i);
                user_index.push(f * n_q + k);
            }
        }
    }
    let sum_users = Arc::new(SparseMatrix::from_triplets(
        files * n_c,
        triples,
        (0..triples).map(|t| (t / n_q.max(1), t, T::one())),
    )?);
    let sum_segments = Arc::new(SparseMatrix::from_triplets(
        files,
        files * n_c,
        (0..files * n_c).map(|r| (r / n_c, r, T::one())),
    )?);

    let cw = tape.matmul(c, p.w_o)?;
    let cw_rep = tape.gather_rows(cw, &seg_index)?;
    let q_rep = tape.gather_rows(q, &user_index)?;
    let affinity_pre = tape.row_dot(cw_rep, q_rep)?;
    let affinity = tape.tanh(affinity_pre);
    let lq_terms = tape.mul_col(q_rep, affinity)?;
    let lq = tape.sparse_matmul(&sum_users, lq_terms)?;

    let w_ct = tape.transpose(p.w_c);
    let code_term = tape.matmul(c, w_ct)?;
    let w_qt = tape.transpose(p.w_q);
    let user_term = tape.matmul(lq, w_qt)?;
    let pre = tape.add(code_term, user_term)?;
    let map = tape.tanh(pre);

    let logits = tape.matmul(map, p.w_h)?;
    let logits = tape.reshape(logits, files, n_c)?;
    let attention = tape.softmax_rows(logits);
    let column = tape.reshape(attention, files * n_c, 1)?;
    let weighted = tape.mul_col(c, column)?;
    let h = tape.sparse_matmul(&sum_segments, weighted)?;
    Ok(Fused { h, attention })
}

/// Plain weights for evaluating the fusion outside a model.
#[derive(Clone, Debug)]
pub struct FusionWeights<T> {
    pub w_o: Tensor<T>,
    pub w_c: Tensor<T>,
    pub w_q: Tensor<T>,
    pub w_h: Tensor<T>,
}

impl<T: Scalar> FusionWeights<T> {
    pub fn random<R: Rng>(d: usize, n_h: usize, rng: &mut R) -> Self {
        FusionWeights {
            w_o: xavier_init_with(d, d, rng),
            w_c: xavier_init_with(n_h, d, rng),
            w_q: xavier_init_with(n_h, d, rng),
            w_h: xavier_init_with(n_h, 1, rng),
        }
    }

    /// Returns `(h, a)` as plain tensors.
    pub fn fuse(&self, c: &Tensor<T>, q: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::inference();
        let vars = FusionVars {
            w_o: tape.constant(self.w_o.clone()),
            w_c: tape.constant(self.w_c.clone()),
            w_q: tape.constant(self.w_q.clone()),
            w_h: tape.constant(self.w_h.clone()),
        };
        let cv = tape.constant(c.clone());
        let qv = tape.constant(q.clone());
        let out = coattention_fuse(&mut tape, cv, qv, &vars)?;
        Ok((tape.value(out.h).clone(), tape.value(out.attention).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn single_segment_returns_that_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = FusionWeights::<f64>::random(6, 6, &mut rng);
        let c = random_tensor(1, 6, &mut rng);
        let q = random_tensor(4, 6, &mut rng);
        let (h, a) = w.fuse(&c, &q).unwrap();
        assert_eq!(a.data(), &[1.0]);
        assert_eq!(h, c);
    }

    #[test]
    fn zero_users_drop_out_of_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = FusionWeights::<f64>::random(5, 7, &mut rng);
        let c = random_tensor(8, 5, &mut rng);
        let q = Tensor::zeros(4, 5);
        let (_, a) = w.fuse(&c, &q).unwrap();
        // Only the W_C term survives: a = softmax(w_Hᵀ tanh(W_C Cᵀ)).
        let pre = w.w_c.matmul(&c.transpose()).unwrap().map(f64::tanh);
        let mut logits = w.w_h.transpose().matmul(&pre).unwrap().into_data();
        crate::autodiff::softmax_in_place(&mut logits);
        for (x, y) in a.data().iter().zip(&logits) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_matches_per_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, n_c, n_q, files) = (5, 3, 2, 4);
        let w = FusionWeights::<f64>::random(d, 6, &mut rng);
        let c = random_tensor(files * n_c, d, &mut rng);
        let q = random_tensor(files * n_q, d, &mut rng);
        let mut tape = Tape::<f64>::new();
        let vars = FusionVars {
            w_o: tape.constant(w.w_o.clone()),
            w_c: tape.constant(w.w_c.clone()),
            w_q: tape.constant(w.w_q.clone()),
            w_h: tape.constant(w.w_h.clone()),
        };
        let (cv, qv) = (tape.constant(c.clone()), tape.constant(q.clone()));
        let out = coattention_fuse_batched(&mut tape, cv, qv, n_c, n_q, &vars).unwrap();
        for f in 0..files {
            let cf = Tensor::from_fn(n_c, d, |r, k| c.get(f * n_c + r, k));
            let qf = Tensor::from_fn(n_q, d, |r, k| q.get(f * n_q + r, k));
            let (h, a) = w.fuse(&cf, &qf).unwrap();
            for k in 0..d {
                assert!((h.get(0, k) - tape.value(out.h).get(f, k)).abs() < 1e-12);
            }
            for i in 0..n_c {
                assert!((a.get(0, i) - tape.value(out.attention).get(f, i)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn attention_is_a_distribution_and_h_in_hull(seed in any::<u64>(), n_c in 1usize..10, n_q in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 6;
            let w = FusionWeights::<f64>::random(d, 5, &mut rng);
            let c = random_tensor(n_c, d, &mut rng);
            let q = random_tensor(n_q, d, &mut rng);
            let (h, a) = w.fuse(&c, &q).unwrap();
            prop_assert!(a.data().iter().all(|&x| x >= 0.0));
            prop_assert!((a.sum() - 1.0).abs() < 1e-6);
            for col in 0..d {
                let lo = (0..n_c).map(|r| c.get(r, col)).fold(f64::INFINITY, f64::min);
                let hi = (0..n_c).map(|r| c.get(r, col)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(h.get(0, col) >= lo - 1e-12 && h.get(0, col) <= hi + 1e-12);
            }
        }

        #[test]
        fn permuting_users_leaves_output_unchanged(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 5;
            let w = FusionWeights::<f64>::random(d, 4, &mut rng);
            let c = random_tensor(8, d, &mut rng);
            let q = random_tensor(4, d, &mut rng);
            let perm = [2usize, 0, 3, 1];
            let qp = Tensor::from_fn(4, d, |r, col| q.get(perm[r], col));
            let (h1, a1) = w.fuse(&c, &q).unwrap();
            let (h2, a2) = w.fuse(&c, &qp).unwrap();
            prop_assert!(h1.max_abs_diff(&h2).unwrap() < 1e-6);
            prop_assert!(a1.max_abs_diff(&a2).unwrap() < 1e-6);
        }
    }
}
