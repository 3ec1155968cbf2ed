use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{frobenius, RealMatrix};
use crate::rng::{sample_gaussian, sample_uniform_scaled, sample_xavier_uniform, RngStream};

use super::attention::{softmax_attention, AttentionMatrix};
use super::config::{BlockConfig, Placement, ValueInit, Variant};
use super::layers::{attention_heads_output, deescalate, ffn_residual, layer_norm};

/// Measurement points inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStep {
    /// Step 1: multi-head SA plus residual.
    SelfAttention,
    /// Step 2: first layer normalization.
    Norm1,
    /// Step 3: FFN plus residual.
    Ffn,
    /// Step 4: second layer normalization.
    Norm2,
    Deescalate,
}

impl BlockStep {
    /// The 1-based step number; de-escalation has none.
    pub fn index(self) -> Option<usize> {
        match self {
            BlockStep::SelfAttention => Some(1),
            BlockStep::Norm1 => Some(2),
            BlockStep::Ffn => Some(3),
            BlockStep::Norm2 => Some(4),
            BlockStep::Deescalate => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BlockStep::SelfAttention => "1",
            BlockStep::Norm1 => "2",
            BlockStep::Ffn => "3",
            BlockStep::Norm2 => "4",
            BlockStep::Deescalate => "deesc",
        }
    }
}

/// Frobenius norms observed in one pre-norm block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreNormNorms {
    pub input: f64,
    pub normalized: f64,
    /// `‖α[P(X̂)X̂W]‖`, the term the attention sub-layer adds.
    pub attention: f64,
    pub after_attention: f64,
    pub output: f64,
}

/// Receives intermediate results while a block runs. All methods default to
/// doing nothing.
pub trait DiagnosticsSink {
    fn attention(&mut self, _head: usize, _input: &RealMatrix, _p: &AttentionMatrix) {}
    fn step(&mut self, _step: BlockStep, _input: &RealMatrix, _output: &RealMatrix) {}
    fn prenorm_norms(&mut self, _norms: &PreNormNorms) {}
}

#[derive(Debug, Clone)]
pub struct HeadWeights {
    pub wq: RealMatrix,
    pub wk: RealMatrix,
    pub wv: RealMatrix,
}

/// Every weight of one block.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub heads: Vec<HeadWeights>,
    pub w1: RealMatrix,
    pub w2: RealMatrix,
}

impl BlockWeights {
    /// Draws fresh weights: per head `W_q, W_k ~ U(−1, 1)/√d` and the value
    /// block `W_v` (Gaussian with variance `sigma_sq`, or Xavier-uniform),
    /// all `d × d/h`; then Xavier-uniform `W₁` (`d × q`) and `W₂` (`q × d`).
    pub fn sample(cfg: &BlockConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let (d, dh) = (cfg.d, cfg.head_dim());
        let mut heads = Vec::with_capacity(cfg.heads);
        for _ in 0..cfg.heads {
            let wq = sample_uniform_scaled(rng, d, dh, cfg.qk_scale())?;
            let wk = sample_uniform_scaled(rng, d, dh, cfg.qk_scale())?;
            let wv = sample_value_weights(cfg, rng)?;
            heads.push(HeadWeights { wq, wk, wv });
        }
        let q = cfg.ffn_width();
        let w1 = sample_xavier_uniform(rng, d, q)?;
        let w2 = sample_xavier_uniform(rng, q, d)?;
        Ok(BlockWeights { heads, w1, w2 })
    }
}

/// One `d × d/h` value block drawn per `cfg.value_init`.
pub fn sample_value_weights(cfg: &BlockConfig, rng: &mut RngStream) -> Result<RealMatrix> {
    match cfg.value_init {
        ValueInit::Gaussian => sample_gaussian(rng, cfg.d, cfg.head_dim(), cfg.value_variance().sqrt()),
        ValueInit::XavierUniform => sample_xavier_uniform(rng, cfg.d, cfg.head_dim()),
    }
}

/// Softmax attention for every head, with per-head scaling `1/√(d/h)`.
pub fn head_attentions(x: &RealMatrix, cfg: &BlockConfig, weights: &BlockWeights) -> Result<Vec<AttentionMatrix>> {
    weights
        .heads
        .iter()
        .map(|hw| softmax_attention(x, &hw.wq, &hw.wk, cfg.head_dim()))
        .collect()
}

fn check_input(x: &RealMatrix, cfg: &BlockConfig) -> Result<()> {
    if x.shape() != (cfg.n, cfg.d) {
        return Err(Error::shape("block input", format!("{}x{}", cfg.n, cfg.d), format!("{}x{}", x.rows(), x.cols())));
    }
    Ok(())
}

/// Runs the block selected by `cfg.variant` with freshly drawn weights.
pub fn run_block(x: &RealMatrix, cfg: &BlockConfig, rng: &mut RngStream, tap: Option<&mut dyn DiagnosticsSink>) -> Result<RealMatrix> {
    match cfg.variant {
        Variant::PreNorm => pre_norm_block(x, cfg, rng, tap),
        Variant::PostNorm | Variant::PostNormDeescalated => post_norm_block(x, cfg, rng, tap),
    }
}

/// Post-LN block with freshly drawn weights.
pub fn post_norm_block(x: &RealMatrix, cfg: &BlockConfig, rng: &mut RngStream, tap: Option<&mut dyn DiagnosticsSink>) -> Result<RealMatrix> {
    check_input(x, cfg)?;
    let weights = BlockWeights::sample(cfg, rng)?;
    post_norm_forward(x, cfg, &weights, tap)
}

/// Post-LN block with given weights:
///
/// ```text
/// Y₁ = X + α[P₁XW₁ ⋯ P_hXW_h]
/// Y₂ = LN(Y₁)
/// Y₃ = φ(Y₂W₁)W₂ + Y₂
/// Y₄ = LN(Y₃)
/// ```
///
/// For the de-escalated variant `(I − τΠ₁)` is applied either to `Y₂` before
/// the FFN or to `Y₄`.
pub fn post_norm_forward(
    x: &RealMatrix,
    cfg: &BlockConfig,
    weights: &BlockWeights,
    mut tap: Option<&mut dyn DiagnosticsSink>,
) -> Result<RealMatrix> {
    check_input(x, cfg)?;
    let ps = head_attentions(x, cfg, weights)?;
    if let Some(t) = tap.as_deref_mut() {
        for (k, p) in ps.iter().enumerate() {
            t.attention(k, x, p);
        }
    }
    let pairs: Vec<_> = ps.iter().zip(&weights.heads).map(|(p, hw)| (p, &hw.wv)).collect();
    let mut y1 = x.clone();
    y1.axpy(cfg.alpha, &attention_heads_output(x, &pairs)?)?;
    emit(&mut tap, BlockStep::SelfAttention, x, &y1);

    let mut y2 = layer_norm(&y1, &cfg.layer_norm);
    emit(&mut tap, BlockStep::Norm1, &y1, &y2);

    let deescalated = cfg.variant == Variant::PostNormDeescalated;
    if deescalated && cfg.placement == Placement::FfnInput {
        let z = deescalate(&y2, cfg.tau)?;
        emit(&mut tap, BlockStep::Deescalate, &y2, &z);
        y2 = z;
    }

    let y3 = ffn_residual(&y2, &weights.w1, &weights.w2, cfg.activation)?;
    emit(&mut tap, BlockStep::Ffn, &y2, &y3);

    let y4 = layer_norm(&y3, &cfg.layer_norm);
    emit(&mut tap, BlockStep::Norm2, &y3, &y4);

    if deescalated && cfg.placement == Placement::BlockOutput {
        let z = deescalate(&y4, cfg.tau)?;
        emit(&mut tap, BlockStep::Deescalate, &y4, &z);
        return Ok(z);
    }
    Ok(y4)
}

/// Pre-LN block with freshly drawn weights.
pub fn pre_norm_block(x: &RealMatrix, cfg: &BlockConfig, rng: &mut RngStream, tap: Option<&mut dyn DiagnosticsSink>) -> Result<RealMatrix> {
    check_input(x, cfg)?;
    let weights = BlockWeights::sample(cfg, rng)?;
    pre_norm_forward(x, cfg, &weights, tap)
}

/// Pre-LN block with given weights:
///
/// ```text
/// X̂ = LN(X)
/// Y = X + α[P₁(X̂)X̂W₁ ⋯ P_h(X̂)X̂W_h]
/// Z = Y + φ(LN(Y)W₁)W₂
/// ```
///
/// `α` defaults to 1, which is the unscaled form.
pub fn pre_norm_forward(
    x: &RealMatrix,
    cfg: &BlockConfig,
    weights: &BlockWeights,
    mut tap: Option<&mut dyn DiagnosticsSink>,
) -> Result<RealMatrix> {
    check_input(x, cfg)?;
    let xh = layer_norm(x, &cfg.layer_norm);
    let ps = head_attentions(&xh, cfg, weights)?;
    if let Some(t) = tap.as_deref_mut() {
        for (k, p) in ps.iter().enumerate() {
            t.attention(k, &xh, p);
        }
    }
    let pairs: Vec<_> = ps.iter().zip(&weights.heads).map(|(p, hw)| (p, &hw.wv)).collect();
    let attn = attention_heads_output(&xh, &pairs)?.scale(cfg.alpha);
    let y = x.add(&attn)?;
    emit(&mut tap, BlockStep::SelfAttention, x, &y);

    let yn = layer_norm(&y, &cfg.layer_norm);
    // ffn_residual adds its own input; here the residual is Y, not LN(Y).
    let mut z = ffn_residual(&yn, &weights.w1, &weights.w2, cfg.activation)?;
    z.axpy(-1.0, &yn)?;
    z.axpy(1.0, &y)?;
    emit(&mut tap, BlockStep::Ffn, &y, &z);

    if let Some(t) = tap.as_deref_mut() {
        t.prenorm_norms(&PreNormNorms {
            input: frobenius(x),
            normalized: frobenius(&xh),
            attention: frobenius(&attn),
            after_attention: frobenius(&y),
            output: frobenius(&z),
        });
    }
    Ok(z)
}

fn emit(tap: &mut Option<&mut dyn DiagnosticsSink>, step: BlockStep, input: &RealMatrix, output: &RealMatrix) {
    if let Some(t) = tap.as_deref_mut() {
        t.step(step, input, output);
    }
}
