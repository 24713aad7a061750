//! Three-layer single-head graph attention over structure graphs.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{xavier_init_with, ParamId, ParamStore, SparseMatrix, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

pub const GAT_LAYERS: usize = 3;
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GatLayer {
    pub w: ParamId,
    pub a_src: ParamId,
    pub a_dst: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatParams {
    pub layers: Vec<GatLayer>,
}

#[derive(Clone, Copy, Debug)]
pub struct GatLayerVars {
    pub w: Var,
    pub a_src: Var,
    pub a_dst: Var,
}

impl GatParams {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, d: usize, rng: &mut R) -> Self {
        let layers = (0..GAT_LAYERS)
            .map(|l| GatLayer {
                w: store.add(format!("gat.{l}.w"), xavier_init_with(d, d, rng)),
                a_src: store.add(format!("gat.{l}.a_src"), xavier_init_with(d, 1, rng)),
                a_dst: store.add(format!("gat.{l}.a_dst"), xavier_init_with(d, 1, rng)),
            })
            .collect();
        GatParams { layers }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| [l.w, l.a_src, l.a_dst])
    }

    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Vec<GatLayerVars> {
        self.layers
            .iter()
            .map(|l| GatLayerVars {
                w: tape.param(store, l.w),
                a_src: tape.param(store, l.a_src),
                a_dst: tape.param(store, l.a_dst),
            })
            .collect()
    }
}

/// Each layer: `X' = X W`, `e_ij = lrelu(X'_i a_src + X'_j a_dst)` over the
/// neighbourhood of `i` (self included), `out_i = Σ_j softmax_j(e_ij) X'_j`.
/// ELU between layers, none after the last.
pub fn structural_aggregate<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    adjacency: &Arc<SparseMatrix<T>>,
    layers: &[GatLayerVars],
) -> Result<Var> {
    let mut h = x;
    for (l, layer) in layers.iter().enumerate() {
        let xw = tape.matmul(h, layer.w)?;
        let src = tape.matmul(xw, layer.a_src)?;
        let dst = tape.matmul(xw, layer.a_dst)?;
        h = tape.graph_attention(xw, src, dst, adjacency, T::lit(ATTENTION_SLOPE))?;
        if l + 1 < layers.len() {
            h = tape.elu(h);
        }
    }
    Ok(h)
}

/// Plain per-layer weights `(W, a_src, a_dst)` for evaluating outside a model.
#[derive(Clone, Debug)]
pub struct GatWeights<T> {
    pub layers: Vec<[Tensor<T>; 3]>,
}

impl<T: Scalar> GatWeights<T> {
    pub fn random<R: Rng>(d: usize, n_layers: usize, rng: &mut R) -> Self {
        let layers = (0..n_layers)
            .map(|_| {
                [
                    xavier_init_with(d, d, rng),
                    xavier_init_with(d, 1, rng),
                    xavier_init_with(d, 1, rng),
                ]
            })
            .collect();
        GatWeights { layers }
    }

    pub fn aggregate(&self, x: &Tensor<T>, adjacency: &Arc<SparseMatrix<T>>) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let vars: Vec<GatLayerVars> = self
            .layers
            .iter()
            .map(|[w, s, d]| GatLayerVars {
                w: tape.constant(w.clone()),
                a_src: tape.constant(s.clone()),
                a_dst: tape.constant(d.clone()),
            })
            .collect();
        let xv = tape.constant(x.clone());
        let out = structural_aggregate(&mut tape, xv, adjacency, &vars)?;
        Ok(tape.value(out).clone())
    }
}
