//! Dense row-major `f64` matrices and the two token projectors.
//!
//! `Π₁ = 𝟙𝟙ᵀ/n` replaces every column by its mean; `Π⊥ = I − Π₁` centers
//! the columns. Both are applied as O(nd) column-mean broadcasts, never as
//! an n×n product.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Matrix with every entry equal to `value`.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "from_vec" });
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::shape(
                "from_rows",
                format!("{d} columns"),
                format!("{} columns in row {i}", r.len()),
            ));
        }
        Self::from_vec(n, d, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RealMatrix { rows, cols, data }
    }

    /// Rank-one matrix `𝟙vᵀ` with `n` identical rows.
    pub fn repeat_row(n: usize, v: &[f64]) -> Self {
        Self::from_fn(n, v.len(), |_, j| v[j])
    }

    /// Outer product `a bᵀ`.
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -1.0)
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, other: &Self, c: f64) -> Result<Self> {
        self.check_same_shape(other, "add_scaled")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// In-place `self += c·other`.
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// Frobenius inner product `⟨self, other⟩`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Column-wise concatenation `[a₁ a₂ … a_h]`.
    pub fn hcat(blocks: &[RealMatrix]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidParameter("hcat of zero blocks".into()));
        };
        let n = first.rows;
        if let Some(b) = blocks.iter().find(|b| b.rows != n) {
            return Err(Error::shape("hcat", format!("{n} rows"), format!("{} rows", b.rows)));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(n, cols);
        for i in 0..n {
            let mut offset = 0;
            for b in blocks {
                out.data[i * cols + offset..i * cols + offset + b.cols].copy_from_slice(b.row(i));
                offset += b.cols;
            }
        }
        Ok(out)
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn col_block(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(Error::shape(
                "col_block",
                format!("at most {} columns", self.cols),
                format!("columns {start}..{}", start + width),
            ));
        }
        Ok(Self::from_fn(self.rows, width, |i, j| self.get(i, start + j)))
    }

    /// Mean of each column, i.e. `𝟙ᵀX/n`.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Row vector times matrix: `vᵀ·self`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::shape(
                "left_mul_vec",
                format!("vector of length {}", self.rows),
                format!("length {}", v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `self·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(
                "mul_vec",
                format!("vector of length {}", self.cols),
                format!("length {}", v.len()),
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Standard matrix product `a·b`.
pub fn matmul(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("left cols == right rows ({})", a.cols),
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = RealMatrix::zeros(a.rows, b.cols);
    gemm_into(a, b, &mut c, 0.0);
    if !c.is_finite() {
        return Err(Error::NonFinite { op: "matmul" });
    }
    Ok(c)
}

/// `a·bᵀ` without materializing the transpose.
pub fn matmul_transposed(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_transposed",
            format!("equal column counts ({})", a.cols),
            format!("{}x{} times ({}x{})ᵀ", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut c = RealMatrix::zeros(m, n);
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: bᵀ is read through swapped strides of b's row-major buffer;
        // all dimensions and strides describe the owned, correctly sized buffers.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                k as isize,
                1,
                b.data.as_ptr(),
                1,
                k as isize,
                0.0,
                c.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    if !c.is_finite() {
        return Err(Error::NonFinite { op: "matmul_transposed" });
    }
    Ok(c)
}

/// `c ← a·b + beta·c`. Shapes must already agree.
fn gemm_into(a: &RealMatrix, b: &RealMatrix, c: &mut RealMatrix, beta: f64) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    debug_assert_eq!(b.rows, k);
    debug_assert_eq!((c.rows, c.cols), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: pointers come from owned Vecs whose lengths match the row-major
    // m×k, k×n and m×n layouts passed as dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            k as isize,
            1,
            b.data.as_ptr(),
            n as isize,
            1,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `Π₁X`: every column replaced by its mean.
pub fn project_mean(x: &RealMatrix) -> RealMatrix {
    RealMatrix::repeat_row(x.rows, &x.column_means())
}

/// `Π⊥X = X − Π₁X`: columns centered.
pub fn project_complement(x: &RealMatrix) -> RealMatrix {
    let means = x.column_means();
    let mut out = x.clone();
    for i in 0..out.rows {
        for (v, m) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

/// Sum of squared entries.
pub fn frobenius_sq(x: &RealMatrix) -> f64 {
    x.data.iter().map(|v| v * v).sum()
}

pub fn frobenius(x: &RealMatrix) -> f64 {
    frobenius_sq(x).sqrt()
}

/// `‖Π₁X‖²_F = n·‖mean row‖²`, without building Π₁X.
pub fn mean_part_sq(x: &RealMatrix) -> f64 {
    let n = x.rows as f64;
    n * x.column_means().iter().map(|m| m * m).sum::<f64>()
}

/// `‖Π⊥X‖²_F`, summed from centered entries directly so that it stays
/// accurate when the complement part is tiny.
pub fn complement_part_sq(x: &RealMatrix) -> f64 {
    let means = x.column_means();
    let mut acc = 0.0;
    for i in 0..x.rows {
        for (v, m) in x.row(i).iter().zip(&means) {
            let c = v - m;
            acc += c * c;
        }
    }
    acc
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
