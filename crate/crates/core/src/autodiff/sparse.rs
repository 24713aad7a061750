use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row matrix. Column indices are sorted and unique within
/// every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are
    /// summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Argument(format!(
                    "sparse entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Binary pattern: every listed coordinate gets value one.
    pub fn binary(
        rows: usize,
        cols: usize,
        coords: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut m = Self::from_triplets(
            rows,
            cols,
            coords.into_iter().map(|(r, c)| (r, c, T::one())),
        )?;
        for v in &mut m.values {
            *v = T::one();
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.indptr[r]..self.indptr[r + 1]
    }

    /// Column indices of row `r`.
    #[inline]
    pub fn row_indices(&self, r: usize) -> &[usize] {
        &self.indices[self.row_range(r)]
    }

    #[inline]
    pub fn row_values(&self, r: usize) -> &[T] {
        &self.values[self.row_range(r)]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let idx = self.row_indices(r);
        match idx.binary_search(&c) {
            Ok(p) => self.values[self.indptr[r] + p],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            self.row_range(r)
                .map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.iter().map(|(r, c, v)| (c, r, v)))
            .expect("transposed coordinates stay in range")
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(usize, usize, T) -> T) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for p in self.row_range(r) {
                out.values[p] = f(r, self.indices[p], self.values[p]);
            }
        }
        out
    }

    /// `self * x` for a dense right-hand side.
    pub fn matmul_dense(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.cols != x.rows() {
            return Err(Error::shape(
                "sparse_dense_matmul",
                &self.shape(),
                &x.shape(),
            ));
        }
        let m = x.cols();
        let mut out = Tensor::zeros(self.rows, m);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[p];
                let xrow = x.row(self.indices[p]);
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `out += selfᵀ * g`, the adjoint of [`matmul_dense`](Self::matmul_dense).
    pub(crate) fn transpose_matmul_into(&self, g: &Tensor<T>, out: &mut Tensor<T>) {
        for r in 0..self.rows {
            let grow = g.row(r);
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[p];
                let orow = out.row_mut(self.indices[p]);
                for (o, &gv) in orow.iter_mut().zip(grow) {
                    *o += v * gv;
                }
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}
