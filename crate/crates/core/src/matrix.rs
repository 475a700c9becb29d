//! Dense row-major matrices and the numerically stable normalization
//! primitives (row/column softmax, row normalization) the rest of the crate
//! is built on. All arithmetic is 64-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense 2-D array of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from a row-major buffer.
    ///
    /// Fails if either dimension is zero or the buffer length does not
    /// equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { context: "from_vec" });
        }
        if data.len() != rows * cols {
            return Err(Error::DataLength { rows, cols, len: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// All-zero matrix. Panics if either dimension is zero; dimensions are
    /// structural, so a zero here is a programming error, not input.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Identity matrix of size `n`. Panics if `n` is zero.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    /// Borrows one row as a slice.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Standard matrix product with 64-bit accumulation.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// True when every entry is finite; `Err` names the first offender.
    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_finite() {
                    return Err(Error::NonFinite { context, row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

/// Boolean companion to [`Matrix`]: `true` entries participate in
/// normalization, `false` entries are forced to exactly zero weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { context: "mask from_vec" });
        }
        if data.len() != rows * cols {
            return Err(Error::DataLength { rows, cols, len: data.len() });
        }
        Ok(Mask { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    /// True when the entry participates in attention.
    #[inline]
    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }
}

fn check_mask(z: &Matrix, mask: Option<&Mask>) -> Result<()> {
    if let Some(m) = mask {
        if m.shape() != z.shape() {
            return Err(Error::ShapeMismatch { op: "mask", left: z.shape(), right: m.shape() });
        }
    }
    Ok(())
}

/// Exponentiates `z` with a per-row max subtracted first, writing exact
/// zeros into masked entries. Fails on a fully masked row.
pub(crate) fn exp_stable_rows(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    check_mask(z, mask)?;
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for j in 0..z.cols() {
            if mask.map_or(true, |m| m.allowed(i, j)) {
                any = true;
                max = max.max(z.get(i, j));
            }
        }
        if !any {
            return Err(Error::MaskedRow { row: i });
        }
        for j in 0..z.cols() {
            if mask.map_or(true, |m| m.allowed(i, j)) {
                out.set(i, j, libm::exp(z.get(i, j) - max));
            }
        }
    }
    Ok(out)
}

/// Column-wise analogue of [`exp_stable_rows`]. Fails on a fully masked
/// column.
pub(crate) fn exp_stable_cols(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    check_mask(z, mask)?;
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for j in 0..z.cols() {
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for i in 0..z.rows() {
            if mask.map_or(true, |m| m.allowed(i, j)) {
                any = true;
                max = max.max(z.get(i, j));
            }
        }
        if !any {
            return Err(Error::MaskedColumn { col: j });
        }
        for i in 0..z.rows() {
            if mask.map_or(true, |m| m.allowed(i, j)) {
                out.set(i, j, libm::exp(z.get(i, j) - max));
            }
        }
    }
    Ok(out)
}

/// Divides every column by its sum. Internal: inputs are nonnegative by
/// construction at every call site.
pub(crate) fn normalize_cols(m: &Matrix) -> Result<Matrix> {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            sums[j] += m.get(i, j);
        }
    }
    for (j, &s) in sums.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::ZeroColumn { col: j });
        }
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out.set(i, j, m.get(i, j) / sums[j]);
        }
    }
    Ok(out)
}

/// Softmax across each row: subtract the row max, exponentiate, divide by
/// the row sum. Masked entries contribute nothing and come out exactly zero.
pub fn row_softmax(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    let e = exp_stable_rows(z, mask)?;
    row_normalize(&e)
}

/// Softmax down each column; the mirror image of [`row_softmax`].
pub fn col_softmax(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    let e = exp_stable_cols(z, mask)?;
    normalize_cols(&e)
}

/// Divides every row of a nonnegative matrix by its sum.
///
/// Fails on a negative entry or a zero row; the error names the offender.
pub fn row_normalize(m: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let mut sum = 0.0;
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v < 0.0 {
                return Err(Error::NegativeEntry { context: "row_normalize", row: i, col: j });
            }
            sum += v;
        }
        if sum <= 0.0 {
            return Err(Error::ZeroRow { row: i });
        }
        for j in 0..m.cols() {
            out.set(i, j, m.get(i, j) / sum);
        }
    }
    Ok(out)
}
