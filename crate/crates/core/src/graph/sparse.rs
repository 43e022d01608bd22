use serde::{Deserialize, Serialize};

use crate::diff::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicate
    /// coordinates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::validation(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols} matrix"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::validation(format!(
                "duplicate entry at ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut row_offsets = vec![0; n_rows + 1];
        for &(r, _, _) in &entries {
            row_offsets[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n_rows + 1 {
            return Err(Error::validation("row_offsets must have n_rows + 1 entries"));
        }
        if self.row_offsets[0] != 0 || *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return Err(Error::validation(
                "row_offsets must start at 0 and end at the number of stored entries",
            ));
        }
        if self.values.len() != self.col_indices.len() {
            return Err(Error::validation("values and col_indices differ in length"));
        }
        for r in 0..self.n_rows {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::validation("row_offsets must be non-decreasing"));
            }
            let cols = &self.col_indices[lo..hi];
            if cols.iter().any(|&c| c >= self.n_cols) {
                return Err(Error::validation(format!("row {r} has a column index out of range")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "row {r} column indices not strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

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

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|k| vals[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `true` iff the sparsity pattern and values are mirror images.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.triplets().all(|(r, c, v)| self.get(c, r) == Some(v))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] = v;
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, rhs.n_rows(), "sparse-dense shape mismatch");
        let k = rhs.n_cols();
        let mut out = DenseMatrix::zeros(self.n_rows, k);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let dst = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (d, &s) in dst.iter_mut().zip(rhs.row(c)) {
                    *d += v * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`, without materializing the transpose.
    pub fn transpose_matmul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_rows, rhs.n_rows(), "sparse-dense shape mismatch");
        let k = rhs.n_cols();
        let mut out = DenseMatrix::zeros(self.n_cols, k);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let src = rhs.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (d, &s) in out.row_mut(c).iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        out
    }
}
