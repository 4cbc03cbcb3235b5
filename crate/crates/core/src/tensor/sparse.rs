use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

/// Compressed-sparse-row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from raw CSR arrays, validating the layout.
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidParameter("row_offsets must have rows+1 entries starting at 0".into()));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("row_offsets must be nondecreasing".into()));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidParameter("last row offset must equal the number of nonzeros".into()));
        }
        if let Some(&c) = col_indices.iter().find(|&&c| c >= cols) {
            return Err(Error::IndexOutOfRange {
                what: "column index",
                index: c,
                limit: cols,
            });
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "row index",
                    index: r,
                    limit: rows,
                });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    what: "column index",
                    index: c,
                    limit: cols,
                });
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..rows {
            let seg = &mut entries[counts[r]..counts[r + 1]];
            seg.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in seg.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), &triplets).expect("indices in range")
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Half-open range of nonzero positions belonging to row `r`.
    #[inline]
    pub fn row_range(&self, r: usize) -> core::ops::Range<usize> {
        self.row_offsets[r]..self.row_offsets[r + 1]
    }

    /// Row index of every stored entry, in storage order.
    pub fn row_of_entries(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            out.extend(core::iter::repeat_n(r, self.row_range(r).len()));
        }
        out
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::Shape {
                op: "with_values",
                lhs: (self.nnz(), 1),
                rhs: (values.len(), 1),
            });
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_range(r);
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for e in self.row_range(r) {
                out.set(r, self.col_indices[e], out.get(r, self.col_indices[e]) + self.values[e]);
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for e in self.row_range(r) {
                triplets.push((self.col_indices[e], r, self.values[e]));
            }
        }
        Self::from_triplets(self.cols, self.rows, &triplets).expect("transposed indices in range")
    }

    /// `self · d`.
    pub fn mul_dense(&self, d: &Matrix) -> Result<Matrix> {
        if self.cols != d.rows() {
            return Err(Error::Shape {
                op: "spmm",
                lhs: self.shape(),
                rhs: d.shape(),
            });
        }
        let n = d.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for e in self.row_range(r) {
                let v = self.values[e];
                let src = d.row(self.col_indices[e]);
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · d` without building the transpose.
    pub fn t_mul_dense(&self, d: &Matrix) -> Result<Matrix> {
        if self.rows != d.rows() {
            return Err(Error::Shape {
                op: "spmm_t",
                lhs: self.shape(),
                rhs: d.shape(),
            });
        }
        let n = d.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            let src = d.row(r);
            for e in self.row_range(r) {
                let v = self.values[e];
                let dst = out.row_mut(self.col_indices[e]);
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a plain vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.row_range(r)
                    .map(|e| self.values[e] * v[self.col_indices[e]])
                    .sum()
            })
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for r in 0..self.rows {
            for e in self.row_range(r) {
                let c = self.col_indices[e];
                if libm::fabs(self.values[e] - self.get(c, r)) > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Entrywise affine combination `a·self + b·I`, for square matrices.
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Result<SparseMatrix> {
        if self.rows != self.cols {
            return Err(Error::Shape {
                op: "scaled_plus_identity",
                lhs: self.shape(),
                rhs: self.shape(),
            });
        }
        let mut triplets = Vec::with_capacity(self.nnz() + self.rows);
        for r in 0..self.rows {
            for e in self.row_range(r) {
                triplets.push((r, self.col_indices[e], a * self.values[e]));
            }
            triplets.push((r, r, b));
        }
        let mut m = Self::from_triplets(self.rows, self.cols, &triplets)?;
        m.prune_zeros();
        Ok(m)
    }

    fn prune_zeros(&mut self) {
        let mut offsets = Vec::with_capacity(self.rows + 1);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        offsets.push(0);
        for r in 0..self.rows {
            for e in self.row_range(r) {
                if self.values[e] != 0.0 {
                    cols.push(self.col_indices[e]);
                    vals.push(self.values[e]);
                }
            }
            offsets.push(cols.len());
        }
        self.row_offsets = offsets;
        self.col_indices = cols;
        self.values = vals;
    }
}
