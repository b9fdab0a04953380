//! Compressed sparse row matrices with values.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A general `rows x cols` CSR matrix. Column indices are sorted within each
/// row and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr must have rows + 1 entries starting at 0".into());
        }
        if self.col_idx.len() != self.values.len() || self.row_ptr[self.rows] != self.col_idx.len() {
            return bad("row_ptr[rows] must equal the number of stored entries".into());
        }
        for r in 0..self.rows {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            if lo > hi {
                return bad(format!("row_ptr decreases at row {r}"));
            }
            let cols = &self.col_idx[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {r} columns not strictly ascending"));
            }
            if cols.last().is_some_and(|&c| c >= self.cols) {
                return bad(format!("row {r} has a column index out of range"));
            }
        }
        Ok(())
    }

    /// Keeps every nonzero entry of `dense`.
    pub fn from_dense(dense: &Tensor) -> Self {
        let mut row_ptr = Vec::with_capacity(dense.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..dense.rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: dense.rows(),
            cols: dense.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
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
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |i| vals[i])
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Walking source rows in order keeps each output row sorted.
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_idx[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// True when the pattern and values are symmetric within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose();
        t.row_ptr == self.row_ptr
            && t.col_idx == self.col_idx
            && t.values
                .iter()
                .zip(&self.values)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// A sparse linear map together with its transpose, as consumed by the
/// taped sparse-dense product. The transpose serves the backward pass.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    forward: CsrMatrix,
    transpose: Option<CsrMatrix>,
}

impl SparseOperator {
    /// Wraps a matrix, storing its transpose unless the matrix is exactly
    /// symmetric.
    pub fn new(forward: CsrMatrix) -> Self {
        let transpose = if forward.is_symmetric(0.0) {
            None
        } else {
            Some(forward.transpose())
        };
        Self { forward, transpose }
    }

    #[inline]
    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }

    #[inline]
    pub fn transposed(&self) -> &CsrMatrix {
        self.transpose.as_ref().unwrap_or(&self.forward)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.forward.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.forward.cols
    }
}
