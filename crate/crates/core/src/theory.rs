//! Closed-form expectations, bounds and estimates of the escalation rate.
//!
//! Throughout, `a = α²dσ²` is the factor by which the attention sub-layer
//! inflates each projector's energy in expectation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{complement_part_sq, mean_part_sq, RealMatrix};
use crate::metrics::mu_pair_from_product;
use crate::transformer::AttentionMatrix;

fn inflation(alpha: f64, d_sigma_sq: f64) -> f64 {
    alpha * alpha * d_sigma_sq
}

/// `(E[ξ₁], E[ξ₂]) = (1 + α²dσ²μ₁², 1 + α²dσ²μ₂²)`.
pub fn expected_xi(alpha: f64, d_sigma_sq: f64, mu1: f64, mu2: f64) -> (f64, f64) {
    let a = inflation(alpha, d_sigma_sq);
    (1.0 + a * mu1 * mu1, 1.0 + a * mu2 * mu2)
}

/// `1 + (a(μ₁² − μ₂²)/(1 + aμ₂²) − E[η])·t_sim(X)`.
pub fn expected_rate_formula(alpha: f64, d_sigma_sq: f64, mu1: f64, mu2: f64, eta_mean: f64, t_sim_x: f64) -> f64 {
    let a = inflation(alpha, d_sigma_sq);
    let (m1, m2) = (mu1 * mu1, mu2 * mu2);
    1.0 + (a / (1.0 + a * m2) * (m1 - m2) - eta_mean) * t_sim_x
}

/// The lower bound on `E[r]` and whether its hypothesis `ω + δ < 1` holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBound {
    pub value: f64,
    /// False when `ω + δ ≥ 1`; the value is then reported but not claimed.
    pub asserted: bool,
}

/// `1 + α²/(1 + α²δ²)·((1 − ω)² − δ²)·t_sim(X)`, for `dσ² = 1`.
pub fn theorem_lower_bound(alpha: f64, omega: f64, delta: f64, t_sim_x: f64) -> TheoremBound {
    let a2 = alpha * alpha;
    let value = 1.0 + a2 / (1.0 + a2 * delta * delta) * ((1.0 - omega).powi(2) - delta * delta) * t_sim_x;
    TheoremBound {
        value,
        asserted: omega + delta < 1.0,
    }
}

/// `(((1 − ω)² − δ²)/(1 + δ²), (1 − |λ₂|²)/(1 + |λ₂|²))`: the slope of the
/// rate in `t_sim` from the general bound and from the symmetric case.
pub fn corollary_estimates(omega: f64, delta: f64, lambda2_mod: f64) -> (f64, f64) {
    let d2 = delta * delta;
    let l2 = lambda2_mod * lambda2_mod;
    (((1.0 - omega).powi(2) - d2) / (1.0 + d2), (1.0 - l2) / (1.0 + l2))
}

/// `μ̄ᵢ = √((1/h)Σ_k ‖ΠᵢP_kX‖²/‖ΠᵢX‖²)`.
pub fn multihead_mu_bar(x: &RealMatrix, ps: &[AttentionMatrix]) -> Result<(f64, f64)> {
    let products = ps.iter().map(|p| p.apply(x)).collect::<Result<Vec<_>>>()?;
    multihead_mu_bar_from_products(x, &products)
}

/// [`multihead_mu_bar`] with each `P_kX` already computed.
pub fn multihead_mu_bar_from_products(x: &RealMatrix, pxs: &[RealMatrix]) -> Result<(f64, f64)> {
    if pxs.is_empty() {
        return Err(Error::InvalidParameter("at least one head is required".into()));
    }
    // Validates the denominators once.
    mu_pair_from_product(x, &pxs[0])?;
    let (mx, cx) = (mean_part_sq(x), complement_part_sq(x));
    let h = pxs.len() as f64;
    let m1: f64 = pxs.iter().map(mean_part_sq).sum::<f64>() / (h * mx);
    let m2: f64 = pxs.iter().map(complement_part_sq).sum::<f64>() / (h * cx);
    Ok((m1.sqrt(), m2.sqrt()))
}

/// `γ = E[ξ₂]²/(E[ξ₁] + 2E[ξ₂]) = (1 + aμ₂²)²/(3 + a(μ₁² + 2μ₂²))`.
pub fn gamma_constant(alpha: f64, d_sigma_sq: f64, mu1: f64, mu2: f64) -> f64 {
    let (e1, e2) = expected_xi(alpha, d_sigma_sq, mu1, mu2);
    e2 * e2 / (e1 + 2.0 * e2)
}

/// `max{μ₁² − (1 − ω)², δ² − μ₂²}`; nonnegative whenever the bounds on
/// `μ₁`, `μ₂` hold.
pub fn tech_condition(mu1: f64, mu2: f64, omega: f64, delta: f64) -> f64 {
    (mu1 * mu1 - (1.0 - omega).powi(2)).max(delta * delta - mu2 * mu2)
}

/// Fraction of `samples` with `|s| ≥ threshold`.
pub fn empirical_tail(samples: &[f64], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.abs() >= threshold).count() as f64 / samples.len() as f64
}

/// The theoretical quantities attached to one `(X, P)` instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscalationEstimate {
    pub expected_xi1: f64,
    pub expected_xi2: f64,
    pub estimate1: f64,
    pub estimate2: f64,
    pub expected_rate_lower: f64,
    pub bound_asserted: bool,
    pub gamma: f64,
}

impl EscalationEstimate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(alpha: f64, d_sigma_sq: f64, mu1: f64, mu2: f64, omega: f64, delta: f64, lambda2_mod: f64, t_sim_x: f64) -> Self {
        let (expected_xi1, expected_xi2) = expected_xi(alpha, d_sigma_sq, mu1, mu2);
        let (estimate1, estimate2) = corollary_estimates(omega, delta, lambda2_mod);
        let bound = theorem_lower_bound(alpha, omega, delta, t_sim_x);
        EscalationEstimate {
            expected_xi1,
            expected_xi2,
            estimate1,
            estimate2,
            expected_rate_lower: bound.value,
            bound_asserted: bound.asserted,
            gamma: gamma_constant(alpha, d_sigma_sq, mu1, mu2),
        }
    }
}
