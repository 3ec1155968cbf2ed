use crate::error::{Error, Result};
use crate::matrix::{matmul, project_complement, RealMatrix};

use super::attention::AttentionMatrix;
use super::config::{Activation, LayerNormParams};

/// `X + αPXW` for a single `d × d` value matrix.
pub fn sa_residual_single(x: &RealMatrix, p: &AttentionMatrix, w: &RealMatrix, alpha: f64) -> Result<RealMatrix> {
    let d = x.cols();
    if w.shape() != (d, d) {
        return Err(Error::shape("sa_residual_single", format!("W of shape {d}x{d}"), format!("{}x{}", w.rows(), w.cols())));
    }
    let mut out = x.clone();
    out.axpy(alpha, &head_product(x, p, w)?)?;
    Ok(out)
}

/// `[P₁XW₁ ⋯ P_hXW_h]`, the concatenated head outputs before scaling.
///
/// Each `W_k` must be `d × d/h` where `h = heads.len()`.
pub fn attention_heads_output(x: &RealMatrix, heads: &[(&AttentionMatrix, &RealMatrix)]) -> Result<RealMatrix> {
    let h = heads.len();
    let d = x.cols();
    if h == 0 || d % h != 0 {
        return Err(Error::shape(
            "attention_heads_output",
            format!("a head count dividing d = {d}"),
            format!("{h} heads"),
        ));
    }
    let width = d / h;
    let mut blocks = Vec::with_capacity(h);
    for (k, (p, w)) in heads.iter().enumerate() {
        if w.shape() != (d, width) {
            return Err(Error::shape(
                "attention_heads_output",
                format!("head {k} W of shape {d}x{width}"),
                format!("{}x{}", w.rows(), w.cols()),
            ));
        }
        blocks.push(head_product(x, p, w)?);
    }
    if blocks.len() == 1 {
        return Ok(blocks.pop().unwrap());
    }
    RealMatrix::hcat(&blocks)
}

/// `X + α[P₁XW₁ ⋯ P_hXW_h]`.
pub fn sa_residual_multihead(x: &RealMatrix, heads: &[(&AttentionMatrix, &RealMatrix)], alpha: f64) -> Result<RealMatrix> {
    let mut out = x.clone();
    out.axpy(alpha, &attention_heads_output(x, heads)?)?;
    Ok(out)
}

/// `PXW`, evaluated as `P(XW)`.
fn head_product(x: &RealMatrix, p: &AttentionMatrix, w: &RealMatrix) -> Result<RealMatrix> {
    if p.n() != x.rows() {
        return Err(Error::shape("attention", format!("P of order {}", x.rows()), format!("order {}", p.n())));
    }
    p.apply(&matmul(x, w)?)
}

/// Row-wise layer normalization: `gain·(x − mean)/√(var + ε) + bias`, with the
/// population variance over the row.
pub fn layer_norm(x: &RealMatrix, params: &LayerNormParams) -> RealMatrix {
    let d = x.cols() as f64;
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let scale = params.gain / (var + params.epsilon).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * scale + params.bias);
    }
    out
}

/// `φ(XW₁)W₂ + X`.
pub fn ffn_residual(x: &RealMatrix, w1: &RealMatrix, w2: &RealMatrix, activation: Activation) -> Result<RealMatrix> {
    if w1.rows() != x.cols() || w2.cols() != x.cols() || w1.cols() != w2.rows() {
        return Err(Error::shape(
            "ffn_residual",
            format!("W₁ {d}xq and W₂ qx{d}", d = x.cols()),
            format!("{}x{} and {}x{}", w1.rows(), w1.cols(), w2.rows(), w2.cols()),
        ));
    }
    let mut hidden = matmul(x, w1)?;
    hidden.as_mut_slice().iter_mut().for_each(|v| *v = activation.apply(*v));
    let mut out = matmul(&hidden, w2)?;
    out.axpy(1.0, x)?;
    Ok(out)
}

/// `(I − τΠ₁)X`. At `τ = 1` this is exact column centering.
pub fn deescalate(x: &RealMatrix, tau: f64) -> Result<RealMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    if tau == 1.0 {
        return Ok(project_complement(x));
    }
    let means = x.column_means();
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, m) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= tau * m;
        }
    }
    Ok(out)
}
