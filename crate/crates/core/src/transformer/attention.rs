use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_transposed, RealMatrix};

/// Row sums must match 1 to this absolute tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A validated row-stochastic `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix(RealMatrix);

impl AttentionMatrix {
    pub fn new(p: RealMatrix) -> Result<Self> {
        Self::with_tolerance(p, STOCHASTIC_TOL)
    }

    /// Validates stochasticity with a caller-chosen row-sum tolerance
    /// (useful for matrices read from text at limited precision).
    pub fn with_tolerance(p: RealMatrix, tol: f64) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::shape(
                "AttentionMatrix",
                "square matrix",
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..p.rows() {
            let row = p.row(i);
            if let Some(j) = row.iter().position(|&v| v < 0.0) {
                return Err(Error::NotStochastic {
                    row: i,
                    detail: format!("has negative entry {} in column {j}", row[j]),
                });
            }
            let dev = (row.iter().sum::<f64>() - 1.0).abs();
            if dev > tol && worst.is_none_or(|(_, w)| dev > w) {
                worst = Some((i, dev));
            }
        }
        if let Some((row, dev)) = worst {
            let sum: f64 = p.row(row).iter().sum();
            return Err(Error::NotStochastic {
                row,
                detail: format!("sums to {sum} (deviation {dev:e} exceeds {tol:e})"),
            });
        }
        Ok(AttentionMatrix(p))
    }

    /// Uniform attention `𝟙𝟙ᵀ/n`.
    pub fn uniform(n: usize) -> Self {
        AttentionMatrix(RealMatrix::filled(n, n, 1.0 / n as f64))
    }

    pub fn identity(n: usize) -> Self {
        AttentionMatrix(RealMatrix::identity(n))
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    /// `‖P𝟙 − 𝟙‖₂`.
    pub fn row_sum_residual(&self) -> f64 {
        self.0.row_sums().iter().map(|s| (s - 1.0).powi(2)).sum::<f64>().sqrt()
    }

    /// `PX`.
    pub fn apply(&self, x: &RealMatrix) -> Result<RealMatrix> {
        matmul(&self.0, x)
    }
}

/// Row-wise softmax of `M = XW_q(XW_k)ᵀ/√scale_dim`.
///
/// Each row is shifted by its maximum before exponentiation; softmax is
/// shift-invariant per row so the result is unchanged.
pub fn softmax_attention(
    x: &RealMatrix,
    wq: &RealMatrix,
    wk: &RealMatrix,
    scale_dim: usize,
) -> Result<AttentionMatrix> {
    if scale_dim == 0 {
        return Err(Error::InvalidParameter("softmax scale dimension must be positive".into()));
    }
    if wq.shape() != wk.shape() {
        return Err(Error::shape(
            "softmax_attention",
            format!("W_k of shape {}x{}", wq.rows(), wq.cols()),
            format!("{}x{}", wk.rows(), wk.cols()),
        ));
    }
    let queries = matmul(x, wq)?;
    let keys = matmul(x, wk)?;
    let mut logits = matmul_transposed(&queries, &keys)?;
    let inv = 1.0 / (scale_dim as f64).sqrt();
    logits.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    softmax_rows(logits)
}

/// Row-wise stabilized softmax of a logit matrix.
pub fn softmax_rows(mut logits: RealMatrix) -> Result<AttentionMatrix> {
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { row: i });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    AttentionMatrix::new(logits)
}
