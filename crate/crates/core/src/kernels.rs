//! Dense and sparse-dense matrix products.
//!
//! Every kernel computes each output row independently, accumulating in a
//! fixed order, so the sequential and row-parallel versions agree bit for
//! bit. The unsuffixed entry points pick the parallel version when the crate
//! is built with the `parallel` feature and the product is large enough to be
//! worth splitting.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many multiply-adds the parallel path is not worth the overhead.
#[cfg(feature = "parallel")]
const PAR_WORK_THRESHOLD: usize = 1 << 16;

/// Row `i` of `A * B`: `out += a_row[k] * B[k, :]`, skipping zero `a_row[k]`.
///
/// Skipping zeros changes nothing numerically for finite `B` and makes the
/// product cheap for bag-of-words feature rows.
#[inline]
fn matmul_row(a_row: &[f64], b: &Tensor, out: &mut [f64]) {
    for (k, &a) in a_row.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &bv) in out.iter_mut().zip(b.row(k)) {
            *o += a * bv;
        }
    }
}

#[inline]
fn spmm_row(cols: &[usize], vals: &[f64], dense: &Tensor, out: &mut [f64]) {
    for (&c, &v) in cols.iter().zip(vals) {
        for (o, &x) in out.iter_mut().zip(dense.row(c)) {
            *o += v * x;
        }
    }
}

fn check_matmul(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn check_spmm(m: &CsrMatrix, dense: &Tensor) -> Result<()> {
    if m.cols() != dense.rows() {
        return Err(Error::Shape {
            op: "spmm",
            left: (m.rows(), m.cols()),
            right: dense.shape(),
        });
    }
    Ok(())
}

pub fn matmul_seq(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_matmul(a, b)?;
    let mut out = Tensor::zeros(a.rows(), b.cols());
    let n = b.cols();
    if n == 0 {
        return Ok(out);
    }
    for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
        matmul_row(a.row(i), b, row);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_matmul(a, b)?;
    let mut out = Tensor::zeros(a.rows(), b.cols());
    let n = b.cols();
    if n == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| matmul_row(a.row(i), b, row));
    Ok(out)
}

/// `A * B` for dense operands.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    #[cfg(feature = "parallel")]
    if a.rows() * a.cols() * b.cols() >= PAR_WORK_THRESHOLD {
        return matmul_par(a, b);
    }
    matmul_seq(a, b)
}

pub fn spmm_seq(m: &CsrMatrix, dense: &Tensor) -> Result<Tensor> {
    check_spmm(m, dense)?;
    let mut out = Tensor::zeros(m.rows(), dense.cols());
    let n = dense.cols();
    if n == 0 {
        return Ok(out);
    }
    for (r, row) in out.data_mut().chunks_mut(n).enumerate() {
        let (cols, vals) = m.row(r);
        spmm_row(cols, vals, dense, row);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
pub fn spmm_par(m: &CsrMatrix, dense: &Tensor) -> Result<Tensor> {
    check_spmm(m, dense)?;
    let mut out = Tensor::zeros(m.rows(), dense.cols());
    let n = dense.cols();
    if n == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(r, row)| {
            let (cols, vals) = m.row(r);
            spmm_row(cols, vals, dense, row);
        });
    Ok(out)
}

/// Sparse-dense product `M * D`.
pub fn spmm(m: &CsrMatrix, dense: &Tensor) -> Result<Tensor> {
    #[cfg(feature = "parallel")]
    if m.nnz() * dense.cols() >= PAR_WORK_THRESHOLD {
        return spmm_par(m, dense);
    }
    spmm_seq(m, dense)
}
