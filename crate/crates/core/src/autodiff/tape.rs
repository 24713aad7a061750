//! Reverse-mode differentiation over an append-only operation record.
//!
//! Every operation appends one node holding its output value. `backward`
//! walks the nodes from the loss towards the leaves in exact reverse order,
//! accumulating adjoints additively. A tape built with
//! [`Tape::inference`] computes the same values but keeps no backward
//! metadata and refuses to differentiate.

use std::sync::Arc;

use crate::autodiff::tensor::{matmul_into, matmul_nt_into, matmul_tn_into};
use crate::autodiff::{ParamId, ParamStore, SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix<T>>, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Reshape(Var),
    Scale(Var, T),
    Tanh(Var),
    LeakyRelu(Var, T),
    Elu(Var),
    Softplus(Var),
    Sqrt(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    L2NormalizeRows(Var, Vec<T>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanOver(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    RowSums(Var),
    SumAll(Var),
    MeanAll(Var),
    SumSquares(Var),
    Diagonal(Var),
    GraphAttention(Box<AttentionRecord<T>>),
    /// Value kept, backward metadata dropped (inference tapes).
    Detached,
}

struct AttentionRecord<T> {
    x: Var,
    src: Var,
    dst: Var,
    adjacency: Arc<SparseMatrix<T>>,
    slope: T,
    /// Per-edge attention coefficient, aligned with the adjacency's nonzeros.
    alpha: Vec<T>,
    /// Per-edge pre-activation score `src_i + dst_j`.
    pre: Vec<T>,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that only evaluates.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        debug_assert!(
            value.all_finite() || !self.inputs_finite(&op),
            "non-finite output"
        );
        let op = if self.grad_enabled || matches!(op, Op::Param(_) | Op::Constant) {
            op
        } else {
            Op::Detached
        };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    #[allow(dead_code)]
    fn inputs_finite(&self, op: &Op<T>) -> bool {
        // Only consulted in debug builds: an op may legitimately produce
        // non-finite output when its inputs already were.
        let check = |v: &Var| self.nodes[v.0].value.all_finite();
        match op {
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => check(a) && check(b),
            Op::ConcatCols(vs) | Op::ConcatRows(vs) | Op::MeanOver(vs) => vs.iter().all(check),
            Op::SparseMatMul(_, a)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::LeakyRelu(a, _)
            | Op::Elu(a)
            | Op::Softplus(a)
            | Op::Sqrt(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::L2NormalizeRows(a, _)
            | Op::GatherRows(a, _)
            | Op::RowSums(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::SumSquares(a)
            | Op::Diagonal(a) => check(a),
            Op::GraphAttention(r) => check(&r.x) && check(&r.src) && check(&r.dst),
            Op::Constant | Op::Param(_) | Op::Detached => false,
        }
    }

    // ---- leaves ---------------------------------------------------------

    /// Records a non-trainable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records the current value of a trainable parameter as a leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape("matmul", &av.shape(), &bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        matmul_into(av, bv, &mut out);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn sparse_matmul(&mut self, s: &Arc<SparseMatrix<T>>, x: Var) -> Result<Var> {
        let out = s.matmul_dense(self.value(x))?;
        Ok(self.push(out, Op::SparseMatMul(Arc::clone(s), x)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, &av.shape(), &bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a `1 x m` row to every row of an `n x m` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::shape("add_row", &xv.shape(), &rv.shape()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    /// Multiplies row `i` of an `n x m` matrix by entry `i` of an `n x 1` column.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xv, cv) = (self.value(x), self.value(col));
        if cv.shape() != [xv.rows(), 1] {
            return Err(Error::shape("mul_col", &xv.shape(), &cv.shape()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let c = cv.data()[r];
            for o in out.row_mut(r) {
                *o *= c;
            }
        }
        Ok(self.push(out, Op::MulCol(x, col)))
    }

    /// Reinterprets the row-major buffer with a new shape of equal size.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if rows * cols != av.len() {
            return Err(Error::shape("reshape", &av.shape(), &[rows, cols]));
        }
        let out = Tensor::from_vec(rows, cols, av.data().to_vec())?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { x * slope });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { x.exp_m1() });
        self.push(out, Op::Elu(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::sqrt);
        self.push(out, Op::Sqrt(a))
    }

    // ---- row-wise normalisations -----------------------------------------

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let lse = logsumexp(row);
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// Scales each row to unit Euclidean norm. All-zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        let mut norms = Vec::with_capacity(av.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            let n = n.max(T::lit(1e-12));
            for x in row.iter_mut() {
                *x /= n;
            }
            norms.push(n);
        }
        self.push(out, Op::L2NormalizeRows(a, norms))
    }

    // ---- structural -----------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("concat_cols of zero tensors".into()))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(Error::shape("concat_cols", &self.shape(first), &s));
            }
            cols += s[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("concat_rows of zero tensors".into()))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::shape("concat_rows", &self.shape(first), &v.shape()));
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean_over(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("mean_over of zero tensors".into()))?;
        let shape = self.shape(first);
        let mut out = Tensor::zeros(shape[0], shape[1]);
        for &p in parts {
            let v = self.value(p);
            if v.shape() != shape {
                return Err(Error::shape("mean_over", &shape, &v.shape()));
            }
            out.add_assign(v);
        }
        out.scale_assign(T::one() / T::from_usize_lossy(parts.len()));
        Ok(self.push(out, Op::MeanOver(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= av.rows() {
                return Err(Error::Argument(format!(
                    "gather_rows index {i} out of range for {} rows",
                    av.rows()
                )));
            }
            data.extend_from_slice(av.row(i));
        }
        let out = Tensor::from_vec(index.len(), cols, data)?;
        Ok(self.push(out, Op::GatherRows(a, index.to_vec())))
    }

    /// Per-row sums as an `n x 1` column.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows())
            .map(|r| av.row(r).iter().copied().sum())
            .collect();
        let out = Tensor::from_vec(av.rows(), 1, data).expect("n x 1");
        self.push(out, Op::RowSums(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = T::from_usize_lossy(av.len().max(1));
        let out = Tensor::scalar(av.sum() / n);
        self.push(out, Op::MeanAll(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum_squares());
        self.push(out, Op::SumSquares(a))
    }

    /// Diagonal of a square matrix as an `n x 1` column.
    pub fn diagonal(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != av.cols() {
            return Err(Error::shape(
                "diagonal",
                &av.shape(),
                &[av.rows(), av.rows()],
            ));
        }
        let data = (0..av.rows()).map(|i| av.get(i, i)).collect();
        let out = Tensor::from_vec(av.rows(), 1, data)?;
        Ok(self.push(out, Op::Diagonal(a)))
    }

    /// Row dot products of two equally shaped matrices, as an `n x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        Ok(self.row_sums(m))
    }

    // ---- graph attention ------------------------------------------------

    /// Single-head attention aggregation over a sparse neighbourhood pattern.
    ///
    /// For each row `i` with neighbours `j` in `adjacency` (its stored
    /// pattern; values are ignored):
    /// `e_ij = leaky_relu(src_i + dst_j)`, `alpha_i = softmax_j(e_ij)`,
    /// `out_i = sum_j alpha_ij x_j`. `src` and `dst` are `n x 1` columns.
    /// Rows without neighbours produce zero output.
    pub fn graph_attention(
        &mut self,
        x: Var,
        src: Var,
        dst: Var,
        adjacency: &Arc<SparseMatrix<T>>,
        slope: T,
    ) -> Result<Var> {
        let n = adjacency.rows();
        let (xv, sv, dv) = (self.value(x), self.value(src), self.value(dst));
        if adjacency.cols() != n || xv.rows() != n {
            return Err(Error::shape(
                "graph_attention",
                &adjacency.shape(),
                &xv.shape(),
            ));
        }
        if sv.shape() != [n, 1] || dv.shape() != [n, 1] {
            return Err(Error::shape("graph_attention", &sv.shape(), &dv.shape()));
        }
        let mut alpha = Vec::with_capacity(adjacency.nnz());
        let mut pre = Vec::with_capacity(adjacency.nnz());
        let mut out = Tensor::zeros(n, xv.cols());
        for i in 0..n {
            let nbrs = adjacency.row_indices(i);
            let start = alpha.len();
            for &j in nbrs {
                let p = sv.data()[i] + dv.data()[j];
                pre.push(p);
                alpha.push(if p > T::zero() { p } else { p * slope });
            }
            softmax_in_place(&mut alpha[start..]);
            let orow = out.row_mut(i);
            for (k, &j) in nbrs.iter().enumerate() {
                let a = alpha[start + k];
                for (o, &xj) in orow.iter_mut().zip(xv.row(j)) {
                    *o += a * xj;
                }
            }
        }
        let record = AttentionRecord {
            x,
            src,
            dst,
            adjacency: Arc::clone(adjacency),
            slope,
            alpha,
            pre,
        };
        Ok(self.push(out, Op::GraphAttention(Box::new(record))))
    }

    /// Attention coefficients of a recorded [`graph_attention`](Self::graph_attention)
    /// node, aligned with the adjacency's nonzeros.
    pub fn attention_coefficients(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::GraphAttention(r) => Some(&r.alpha),
            _ => None,
        }
    }

    // ---- backward -------------------------------------------------------

    /// Gradients of the `1 x 1` value `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Argument("backward on an empty tape".into()));
        }
        if !self.grad_enabled {
            return Err(Error::Argument("backward on an inference tape".into()));
        }
        if loss.0 >= self.nodes.len() || self.shape(loss) != [1, 1] {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes.get(loss.0).map(|n| n.value.shape())
            )));
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            tape_params: self.param_nodes(),
        })
    }

    fn param_nodes(&self) -> Vec<(ParamId, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect()
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let one = T::one();
        match op {
            Op::Constant | Op::Param(_) | Op::Detached => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                matmul_nt_into(g, bv, slot(grads, *a, av));
                matmul_tn_into(av, g, slot(grads, *b, bv));
            }
            Op::SparseMatMul(s, x) => {
                let xv = self.value(*x);
                s.transpose_matmul_into(g, slot(grads, *x, xv));
            }
            Op::Transpose(a) => {
                slot(grads, *a, self.value(*a)).add_assign(&g.transpose());
            }
            Op::Add(a, b) => {
                slot(grads, *a, g).add_assign(g);
                slot(grads, *b, g).add_assign(g);
            }
            Op::Sub(a, b) => {
                slot(grads, *a, g).add_assign(g);
                accumulate(slot(grads, *b, g), g, |gv, _| -gv, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(slot(grads, *a, av), g, |gv, y| gv * y, bv);
                accumulate(slot(grads, *b, bv), g, |gv, x| gv * x, av);
            }
            Op::AddRow(x, row) => {
                slot(grads, *x, g).add_assign(g);
                let rv = self.value(*row);
                let gr = slot(grads, *row, rv);
                for r in 0..g.rows() {
                    for (o, &gv) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
            }
            Op::MulCol(x, col) => {
                let (xv, cv) = (self.value(*x), self.value(*col));
                let gx = slot(grads, *x, xv);
                for r in 0..g.rows() {
                    let c = cv.data()[r];
                    for (o, &gv) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                        *o += gv * c;
                    }
                }
                let gc = slot(grads, *col, cv);
                for r in 0..g.rows() {
                    let d: T = g
                        .row(r)
                        .iter()
                        .zip(xv.row(r))
                        .map(|(&gv, &xv)| gv * xv)
                        .sum();
                    gc.data_mut()[r] += d;
                }
            }
            Op::Reshape(a) => {
                let ga = slot(grads, *a, self.value(*a));
                for (o, &gv) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o += gv;
                }
            }
            Op::Scale(a, f) => {
                let f = *f;
                accumulate(slot(grads, *a, g), g, |gv, _| gv * f, g);
            }
            Op::Tanh(a) => accumulate(slot(grads, *a, g), g, |gv, y| gv * (one - y * y), out),
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let av = self.value(*a);
                accumulate(
                    slot(grads, *a, g),
                    g,
                    |gv, x| if x > T::zero() { gv } else { gv * s },
                    av,
                );
            }
            Op::Elu(a) => {
                let av = self.value(*a);
                let d = Tensor::from_vec(
                    av.rows(),
                    av.cols(),
                    av.data()
                        .iter()
                        .zip(out.data())
                        .map(|(&x, &y)| if x > T::zero() { one } else { y + one })
                        .collect(),
                )
                .expect("same shape");
                accumulate(slot(grads, *a, g), g, |gv, dv| gv * dv, &d);
            }
            Op::Softplus(a) => {
                let av = self.value(*a);
                accumulate(slot(grads, *a, g), g, |gv, x| gv * sigmoid(x), av);
            }
            Op::Sqrt(a) => {
                let two = T::lit(2.0);
                accumulate(slot(grads, *a, g), g, |gv, y| gv / (two * y), out);
            }
            Op::SoftmaxRows(a) => {
                let ga = slot(grads, *a, g);
                for r in 0..g.rows() {
                    let (yr, gr) = (out.row(r), g.row(r));
                    let dot: T = yr.iter().zip(gr).map(|(&y, &gv)| y * gv).sum();
                    for ((o, &y), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o += y * (gv - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let ga = slot(grads, *a, g);
                for r in 0..g.rows() {
                    let (yr, gr) = (out.row(r), g.row(r));
                    let total: T = gr.iter().copied().sum();
                    for ((o, &y), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o += gv - y.exp() * total;
                    }
                }
            }
            Op::L2NormalizeRows(a, norms) => {
                let ga = slot(grads, *a, g);
                for r in 0..g.rows() {
                    let (yr, gr) = (out.row(r), g.row(r));
                    let dot: T = yr.iter().zip(gr).map(|(&y, &gv)| y * gv).sum();
                    let n = norms[r];
                    for ((o, &y), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o += (gv - y * dot) / n;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    let gp = slot(grads, p, pv);
                    for r in 0..g.rows() {
                        for (o, &gv) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                            *o += gv;
                        }
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let h = pv.rows();
                    let gp = slot(grads, p, pv);
                    for r in 0..h {
                        for (o, &gv) in gp.row_mut(r).iter_mut().zip(g.row(off + r)) {
                            *o += gv;
                        }
                    }
                    off += h;
                }
            }
            Op::MeanOver(parts) => {
                let w = one / T::from_usize_lossy(parts.len());
                for &p in parts {
                    accumulate(slot(grads, p, g), g, |gv, _| gv * w, g);
                }
            }
            Op::GatherRows(a, index) => {
                let ga = slot(grads, *a, self.value(*a));
                for (r, &i) in index.iter().enumerate() {
                    for (o, &gv) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
            }
            Op::RowSums(a) => {
                let ga = slot(grads, *a, self.value(*a));
                for r in 0..g.rows() {
                    let gv = g.data()[r];
                    for o in ga.row_mut(r) {
                        *o += gv;
                    }
                }
            }
            Op::SumAll(a) => {
                let gv = g.item();
                for o in slot(grads, *a, self.value(*a)).data_mut() {
                    *o += gv;
                }
            }
            Op::MeanAll(a) => {
                let av = self.value(*a);
                let gv = g.item() / T::from_usize_lossy(av.len().max(1));
                for o in slot(grads, *a, av).data_mut() {
                    *o += gv;
                }
            }
            Op::SumSquares(a) => {
                let av = self.value(*a);
                let two_g = T::lit(2.0) * g.item();
                accumulate(slot(grads, *a, av), av, |x, _| two_g * x, av);
            }
            Op::Diagonal(a) => {
                let ga = slot(grads, *a, self.value(*a));
                for i in 0..g.rows() {
                    let v = ga.get(i, i) + g.data()[i];
                    ga.set(i, i, v);
                }
            }
            Op::GraphAttention(rec) => self.attention_backward(rec, g, grads),
        }
    }

    fn attention_backward(
        &self,
        rec: &AttentionRecord<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let xv = self.value(rec.x);
        let n = rec.adjacency.rows();
        let mut gsrc = vec![T::zero(); n];
        let mut gdst = vec![T::zero(); n];
        {
            let gx = slot(grads, rec.x, xv);
            for i in 0..n {
                let range = rec.adjacency.row_range(i);
                let nbrs = rec.adjacency.row_indices(i);
                let gi = g.row(i);
                // d out_i / d alpha_ij = g_i . x_j
                let dalpha: Vec<T> = nbrs
                    .iter()
                    .map(|&j| gi.iter().zip(xv.row(j)).map(|(&a, &b)| a * b).sum())
                    .collect();
                let alpha = &rec.alpha[range.clone()];
                let weighted: T = alpha.iter().zip(&dalpha).map(|(&a, &d)| a * d).sum();
                for (k, &j) in nbrs.iter().enumerate() {
                    let a = alpha[k];
                    for (o, &gv) in gx.row_mut(j).iter_mut().zip(gi) {
                        *o += a * gv;
                    }
                    let de = a * (dalpha[k] - weighted);
                    let dpre = if rec.pre[range.start + k] > T::zero() {
                        de
                    } else {
                        de * rec.slope
                    };
                    gsrc[i] += dpre;
                    gdst[j] += dpre;
                }
            }
        }
        let gs = slot(grads, rec.src, self.value(rec.src));
        for (o, v) in gs.data_mut().iter_mut().zip(gsrc) {
            *o += v;
        }
        let gd = slot(grads, rec.dst, self.value(rec.dst));
        for (o, v) in gd.data_mut().iter_mut().zip(gdst) {
            *o += v;
        }
    }
}

/// Adjoints of every node reached from the loss.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    tape_params: Vec<(ParamId, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `v`, or `None` when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// One gradient per parameter in `store`, summed over every time the
    /// parameter was recorded. Parameters that never reach the loss get
    /// exact zeros.
    pub fn for_params(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        for &(id, node) in &self.tape_params {
            if let Some(g) = &self.grads[node] {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}

fn slot<'a, T: Scalar>(
    grads: &'a mut [Option<Tensor<T>>],
    v: Var,
    like: &Tensor<T>,
) -> &'a mut Tensor<T> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

/// `dst[k] += f(g[k], aux[k])`.
fn accumulate<T: Scalar>(
    dst: &mut Tensor<T>,
    g: &Tensor<T>,
    f: impl Fn(T, T) -> T,
    aux: &Tensor<T>,
) {
    for ((o, &gv), &x) in dst.data_mut().iter_mut().zip(g.data()).zip(aux.data()) {
        *o += f(gv, x);
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

pub(crate) fn logsumexp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
