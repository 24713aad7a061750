//! Light-convolution propagation over user–item bipartite graphs and
//! mean-pooling of the resulting layer stack.

use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric-normalised adjacency of the bipartite graph whose biadjacency
/// is `m` (`users x items`). Node order is users then items; entry `(i, j)`
/// is `1 / sqrt(|N_i| |N_j|)` wherever `m` has a stored entry. Stored values
/// of `m` are ignored.
pub fn normalize_adjacency<T: Scalar, U: Scalar>(m: &SparseMatrix<U>) -> Arc<SparseMatrix<T>> {
    let (users, items) = (m.rows(), m.cols());
    let mut item_degree = vec![0usize; items];
    for &j in m.indices() {
        item_degree[j] += 1;
    }
    let weight = |du: usize, dv: usize| T::one() / T::lit((du as f64 * dv as f64).sqrt());
    let mut triplets = Vec::with_capacity(2 * m.nnz());
    for u in 0..users {
        let du = m.row_nnz(u);
        for &j in m.row_indices(u) {
            let w = weight(du, item_degree[j]);
            triplets.push((u, users + j, w));
            triplets.push((users + j, u, w));
        }
    }
    Arc::new(
        SparseMatrix::from_triplets(users + items, users + items, triplets)
            .expect("indices in range"),
    )
}

/// `E^(l) = Â E^(l-1)` for `l = 1..=layers`; returns all `layers + 1` entries.
pub fn propagate<T: Scalar>(
    tape: &mut Tape<T>,
    e0: Var,
    adjacency: &Arc<SparseMatrix<T>>,
    layers: usize,
) -> Result<Vec<Var>> {
    let mut stack = Vec::with_capacity(layers + 1);
    stack.push(e0);
    for _ in 0..layers {
        let next = tape.sparse_matmul(adjacency, *stack.last().expect("nonempty"))?;
        stack.push(next);
    }
    Ok(stack)
}

/// `E★ = (1 / (L + 1)) Σ_l E^(l)`.
pub fn pool_layers<T: Scalar>(tape: &mut Tape<T>, stack: &[Var]) -> Result<Var> {
    if stack.is_empty() {
        return Err(Error::Argument("pool_layers on an empty stack".into()));
    }
    tape.mean_over(stack)
}

/// Value-only propagation without a tape.
pub fn propagate_values<T: Scalar>(
    e0: &Tensor<T>,
    adjacency: &SparseMatrix<T>,
    layers: usize,
) -> Result<Vec<Tensor<T>>> {
    let mut stack = vec![e0.clone()];
    for _ in 0..layers {
        let next = adjacency.matmul_dense(stack.last().expect("nonempty"))?;
        stack.push(next);
    }
    Ok(stack)
}

pub fn pool_values<T: Scalar>(stack: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = stack
        .first()
        .ok_or_else(|| Error::Argument("pool_values on an empty stack".into()))?;
    let mut out = Tensor::zeros(first.rows(), first.cols());
    for layer in stack {
        if layer.shape() != first.shape() {
            return Err(Error::shape("pool_values", &first.shape(), &layer.shape()));
        }
        out.add_assign(layer);
    }
    out.scale_assign(T::one() / T::from_usize_lossy(stack.len()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SparseMatrix<f64> {
        // u1–v1, u1–v2, u2–v1
        SparseMatrix::binary(2, 2, [(0, 0), (0, 1), (1, 0)]).unwrap()
    }

    #[test]
    fn degree_formula() {
        let a = normalize_adjacency::<f64, f64>(&toy());
        assert!((a.get(0, 2) - 0.5).abs() < 1e-15);
        assert!((a.get(0, 3) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((a.get(1, 2) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.get(1, 3), 0.0);
        assert_eq!(a.transpose(), *a);
    }

    #[test]
    fn single_edge_and_isolated_user() {
        let m = SparseMatrix::<f64>::binary(2, 1, [(0, 0)]).unwrap();
        let a = normalize_adjacency::<f64, f64>(&m);
        assert_eq!(a.get(0, 2), 1.0);
        assert_eq!(a.row_nnz(1), 0);
    }

    #[test]
    fn one_layer_on_scalar_features() {
        let a = normalize_adjacency::<f64, f64>(&toy());
        let e0 = Tensor::from_vec(4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let stack = propagate_values(&e0, &a, 1).unwrap();
        let e1 = &stack[1];
        let r = 0.5f64.sqrt();
        assert!((e1.get(0, 0) - (0.5 + r)).abs() < 1e-12);
        assert!((e1.get(1, 0) - r).abs() < 1e-12);
        assert_eq!(e1.get(2, 0), 0.0);
        assert_eq!(e1.get(3, 0), 0.0);
    }

    #[test]
    fn zero_layers_is_identity() {
        let a = normalize_adjacency::<f64, f64>(&toy());
        let e0 = Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
        let stack = propagate_values(&e0, &a, 0).unwrap();
        assert_eq!(stack, vec![e0]);
    }

    #[test]
    fn biregular_graph_preserves_constants() {
        // Complete 2x3 bipartite graph: users have degree 3, items degree 2.
        let m = SparseMatrix::<f64>::binary(2, 3, (0..2).flat_map(|u| (0..3).map(move |v| (u, v))))
            .unwrap();
        let a = normalize_adjacency::<f64, f64>(&m);
        let e0 = Tensor::filled(5, 2, 1.0);
        // User rows of Â sum to sqrt(3/2) and item rows to sqrt(2/3), so the
        // constant comes back every second layer.
        let stack = propagate_values(&e0, &a, 4).unwrap();
        for (l, layer) in stack.iter().enumerate() {
            let (user, item) = if l % 2 == 0 {
                (1.0, 1.0)
            } else {
                (1.5f64.sqrt(), (2.0f64 / 3.0).sqrt())
            };
            assert!((0..2).all(|r| (layer.get(r, 0) - user).abs() < 1e-12));
            assert!((2..5).all(|r| (layer.get(r, 0) - item).abs() < 1e-12));
        }
        // On a regular bipartite graph (equal degrees) rows of Â sum to 1.
        let m = SparseMatrix::<f64>::binary(3, 3, (0..3).flat_map(|u| [(u, u), (u, (u + 1) % 3)]))
            .unwrap();
        let a = normalize_adjacency::<f64, f64>(&m);
        let e0 = Tensor::filled(6, 2, 0.7);
        for layer in propagate_values(&e0, &a, 4).unwrap() {
            assert!(layer.data().iter().all(|&x| (x - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn pooling_is_the_mean() {
        let x = Tensor::from_fn(2, 2, |r, c| (r + 2 * c) as f64);
        let pooled = pool_values(&[Tensor::zeros(2, 2), x.map(|v| 2.0 * v)]).unwrap();
        assert_eq!(pooled, x);
        assert!(pool_values::<f64>(&[]).is_err());
    }
}
