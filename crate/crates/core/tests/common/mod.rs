//! Strategies and invariant checks shared by the property suites and the
//! acceptance runner. Each check returns `Err(message)` on a violation.
#![allow(dead_code)]

pub mod oracles;

use proptest::collection::vec;
use proptest::prelude::*;
use tselab::matrix::{frobenius_sq, mean_part_sq, complement_part_sq, matmul, project_complement, project_mean};
use tselab::metrics::{escalation_rate, mu_pair, omega, token_diversity, token_similarity, xi_pair};
use tselab::rng::{sample_gaussian, RngStream};
use tselab::spectral::delta;
use tselab::theory::{empirical_tail, expected_xi, gamma_constant};
use tselab::transformer::{
    deescalate, ffn_residual, layer_norm, post_norm_block, sa_residual_single, softmax_rows, Activation, AttentionMatrix,
    BlockConfig, LayerNormParams,
};
use tselab::RealMatrix;

pub const CASES: u32 = 1000;

pub fn config() -> ProptestConfig {
    ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() }
}

/// `G + 𝟙sᵀ` with bounded Gaussian-like entries and a random column shift.
pub fn token_matrix(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> impl Strategy<Value = RealMatrix> {
    (n, d).prop_flat_map(|(n, d)| (vec(-5.0f64..5.0, n * d), vec(-3.0f64..3.0, d))).prop_map(|(g, s)| {
        let d = s.len();
        let n = g.len() / d;
        RealMatrix::from_fn(n, d, |i, j| g[i * d + j] + s[j])
    })
}

/// Row softmax of random logits.
pub fn stochastic(n: usize) -> impl Strategy<Value = AttentionMatrix> {
    vec(-4.0f64..4.0, n * n).prop_map(move |l| softmax_rows(RealMatrix::from_vec(n, n, l).unwrap()).unwrap())
}

pub fn matrix_and_attention() -> impl Strategy<Value = (RealMatrix, AttentionMatrix)> {
    (2usize..8, 1usize..8).prop_flat_map(|(n, d)| (token_matrix(n..n + 1, d..d + 1), stochastic(n)))
}

pub fn matrix_pair() -> impl Strategy<Value = (RealMatrix, RealMatrix)> {
    (2usize..8, 1usize..8).prop_flat_map(|(n, d)| (token_matrix(n..n + 1, d..d + 1), token_matrix(n..n + 1, d..d + 1)))
}

/// Rank-one `𝟙vᵀ` whose row `v` is not constant, and a seed for weights.
pub fn rank_one_case() -> impl Strategy<Value = (usize, Vec<f64>, u64)> {
    (2usize..8, vec(-3.0f64..3.0, 2..8), any::<u64>()).prop_filter("row needs spread", |(_, v, _)| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() > 1e-3
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn check_pythagoras(x: &RealMatrix) -> Result<(), String> {
    let total = frobenius_sq(x);
    let parts = frobenius_sq(&project_mean(x)) + frobenius_sq(&project_complement(x));
    if !rel_close(parts, total, 1e-12) {
        return Err(format!("‖Π₁X‖² + ‖Π⊥X‖² = {parts} but ‖X‖² = {total}"));
    }
    Ok(())
}

fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

pub fn check_idempotence(x: &RealMatrix) -> Result<(), String> {
    let m = project_mean(x);
    let c = project_complement(x);
    let (em, ec) = (max_abs_diff(&project_mean(&m), &m), max_abs_diff(&project_complement(&c), &c));
    if em > 1e-14 || ec > 1e-14 {
        return Err(format!("projector not idempotent: mean {em:e}, complement {ec:e}"));
    }
    Ok(())
}

pub fn check_similarity_measures(x: &RealMatrix, c: f64) -> Result<(), String> {
    let (s, v) = (token_similarity(x).unwrap(), token_diversity(x).unwrap());
    if (s + v - 1.0).abs() > 1e-12 {
        return Err(format!("t_sim + t_div = {}", s + v));
    }
    let scaled = token_similarity(&x.scale(c)).unwrap();
    if (scaled - s).abs() > 1e-12 {
        return Err(format!("t_sim(cX) = {scaled} but t_sim(X) = {s} (c = {c})"));
    }
    Ok(())
}

pub fn check_rate_identity(x: &RealMatrix, y: &RealMatrix) -> Result<(), String> {
    let r = escalation_rate(x, y).unwrap();
    let (xi1, xi2) = xi_pair(x, y).unwrap();
    let via_xi = 1.0 + (xi1 / xi2 - 1.0) * token_similarity(x).unwrap();
    if !rel_close(r, via_xi, 1e-10) {
        return Err(format!("r = {r} but 1 + (ξ₁/ξ₂ − 1)t_sim = {via_xi}"));
    }
    Ok(())
}

pub fn check_sign_coupling(x: &RealMatrix, y: &RealMatrix) -> Result<(), String> {
    let r = escalation_rate(x, y).unwrap();
    let (xi1, xi2) = xi_pair(x, y).unwrap();
    // Ties are decided by rounding, not by the relation under test.
    if (xi1 / xi2 - 1.0).abs() < 1e-9 {
        return Ok(());
    }
    if (r > 1.0) != (xi1 > xi2) {
        return Err(format!("r = {r} but ξ₁ = {xi1}, ξ₂ = {xi2}"));
    }
    Ok(())
}

pub fn check_mu_bounds(x: &RealMatrix, p: &AttentionMatrix) -> Result<(), String> {
    let (mu1, mu2) = mu_pair(x, p).unwrap();
    let w = omega(x, p).unwrap();
    let dl = delta(p).unwrap();
    if mu1 < 1.0 - w - 1e-10 {
        return Err(format!("μ₁ = {mu1} < 1 − ω = {}", 1.0 - w));
    }
    if w <= 1.0 && mu1 * mu1 < (1.0 - w).powi(2) - 1e-10 {
        return Err(format!("μ₁² = {} < (1 − ω)² = {}", mu1 * mu1, (1.0 - w).powi(2)));
    }
    if mu2 * mu2 > dl * dl + 1e-10 {
        return Err(format!("μ₂² = {} > δ² = {}", mu2 * mu2, dl * dl));
    }
    Ok(())
}

fn similarity_one(stage: &str, y: &RealMatrix) -> Result<(), String> {
    let s = token_similarity(y).map_err(|e| format!("{stage}: {e}"))?;
    if (s - 1.0).abs() > 1e-10 {
        return Err(format!("{stage}: t_sim = {s} on a rank-one input"));
    }
    Ok(())
}

pub fn check_rank_one_absorption(n: usize, v: &[f64], seed: u64) -> Result<(), String> {
    let d = v.len();
    let x = RealMatrix::repeat_row(n, v);
    let mut rng = RngStream::new(seed, 0);
    let logits = sample_gaussian(&mut rng, n, n, 2.0).unwrap();
    let p = softmax_rows(logits).unwrap();
    let w = sample_gaussian(&mut rng, d, d, 1.0).unwrap();
    similarity_one("self-attention", &sa_residual_single(&x, &p, &w, 1.0).unwrap())?;
    similarity_one("layer norm", &layer_norm(&x, &LayerNormParams::default()))?;
    let w1 = sample_gaussian(&mut rng, d, 2 * d, 1.0).unwrap();
    let w2 = sample_gaussian(&mut rng, 2 * d, d, 1.0).unwrap();
    similarity_one("ffn", &ffn_residual(&x, &w1, &w2, Activation::Relu).unwrap())?;
    let cfg = BlockConfig { n, d, heads: 1, seed, ..BlockConfig::default() };
    similarity_one("post-norm block", &post_norm_block(&x, &cfg, &mut rng, None).unwrap())
}

pub fn check_deescalation(x: &RealMatrix) -> Result<(), String> {
    let y = deescalate(x, 1.0).unwrap();
    let s = token_similarity(&y).unwrap();
    if s > 1e-12 {
        return Err(format!("t_sim after full de-escalation = {s:e}"));
    }
    Ok(())
}

/// Draws used per instance of the tail comparison.
pub const TAIL_DRAWS: usize = 200;

/// `P(|η| ≥ t) ≤ P(max|ξᵢ − E[ξᵢ]| ≥ γt) + 2/√N` on empirical tails, for
/// `W ~ N(0, I/d)` and several `t ∈ (0, 1]`.
pub fn check_tail_ordering(x: &RealMatrix, p: &AttentionMatrix, seed: u64) -> Result<(), String> {
    let d = x.cols();
    let (mu1, mu2) = mu_pair(x, p).unwrap();
    let (e1, e2) = expected_xi(1.0, 1.0, mu1, mu2);
    let gamma = gamma_constant(1.0, 1.0, mu1, mu2);
    let px = p.apply(x).unwrap();
    let (mx, cx) = (mean_part_sq(x), complement_part_sq(x));
    let mut rng = RngStream::new(seed, 0);
    let (mut etas, mut devs) = (Vec::with_capacity(TAIL_DRAWS), Vec::with_capacity(TAIL_DRAWS));
    for _ in 0..TAIL_DRAWS {
        let w = sample_gaussian(&mut rng, d, d, 1.0 / (d as f64).sqrt()).unwrap();
        let y = x.add(&matmul(&px, &w).unwrap()).unwrap();
        let (xi1, xi2) = (mean_part_sq(&y) / mx, complement_part_sq(&y) / cx);
        etas.push(e1 / e2 - xi1 / xi2);
        devs.push((xi1 - e1).abs().max((xi2 - e2).abs()));
    }
    let margin = 2.0 / (TAIL_DRAWS as f64).sqrt();
    for t in [0.05, 0.1, 0.2, 0.5, 1.0] {
        let (left, right) = (empirical_tail(&etas, t), empirical_tail(&devs, gamma * t));
        if left > right + margin {
            return Err(format!("t = {t}: P(|η| ≥ t) = {left} > P(max dev ≥ γt) = {right} + {margin}"));
        }
    }
    Ok(())
}
