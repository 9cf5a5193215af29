//! Dense row-major `f64` matrices and the handful of kernels the model needs.

use std::fmt;

use crate::error::{Error, Result};

/// A dense row-major matrix. Every value in the model is a matrix; scalars
/// are 1x1 and vectors are 1xn rows.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::invalid("ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    /// Returns the scalar held by a 1x1 tensor.
    pub fn item(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm_nn(self, other, &mut out);
        Ok(out)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&self.row(r));
        }
        list.finish()
    }
}

/// `out += a * b`
pub(crate) fn gemm_nn(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out += a * b^T`
pub(crate) fn gemm_nt(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            let dot: f64 = a_row.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
            out.data[i * out.cols + j] += dot;
        }
    }
}

/// `out += a^T * b`
pub(crate) fn gemm_tn(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let n = b.cols;
    for k in 0..a.rows {
        let b_row = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
}

/// Compressed sparse rows, used for the fixed first-stage adjacency operator.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; columns within a row are sorted.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < n_cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        CsrMatrix::from_rows(self.n_rows, rows)
    }

    /// `out += self * dense`
    pub(crate) fn spmm_into(&self, dense: &Tensor, out: &mut Tensor) {
        let n = dense.cols();
        for r in 0..self.n_rows {
            let out_row = &mut out.data[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
    }

    pub fn spmm(&self, dense: &Tensor) -> Result<Tensor> {
        if self.n_cols != dense.rows() {
            return Err(Error::Shape {
                op: "spmm",
                lhs: (self.n_rows, self.n_cols),
                rhs: dense.shape(),
            });
        }
        let mut out = Tensor::zeros(self.n_rows, dense.cols());
        self.spmm_into(dense, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = Tensor::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.0);
        let b = Tensor::from_fn(5, 4, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let mut nt = Tensor::zeros(3, 5);
        gemm_nt(&a, &b, &mut nt);
        assert_eq!(nt, a.matmul(&b.transpose()).unwrap());

        let c = Tensor::from_fn(3, 2, |r, c| (r + 2 * c) as f64);
        let mut tn = Tensor::zeros(4, 2);
        gemm_tn(&a, &c, &mut tn);
        assert_eq!(tn, a.transpose().matmul(&c).unwrap());
    }

    #[test]
    fn csr_spmm_matches_dense() {
        let csr = CsrMatrix::from_rows(3, vec![vec![(2, 0.5), (0, 1.0)], vec![], vec![(1, -2.0)]]);
        let x = Tensor::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        assert_eq!(csr.spmm(&x).unwrap(), csr.to_dense().matmul(&x).unwrap());
        assert_eq!(csr.transpose().to_dense(), csr.to_dense().transpose());
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
