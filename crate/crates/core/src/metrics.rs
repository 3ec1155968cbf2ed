//! Similarity measures and the per-step escalation diagnostics.

use serde::Serialize;

use crate::error::{Error, Projector, Result};
use crate::matrix::{complement_part_sq, frobenius_sq, mean_part_sq, project_complement, RealMatrix};
use crate::transformer::AttentionMatrix;

/// A projector part whose share of the total energy is at or below this is
/// treated as vanished (rounding leaves ~1e-32 behind after exact centering).
pub const BOUNDARY_RTOL: f64 = 1e-24;

fn vanishes(part: f64, total: f64) -> bool {
    part <= BOUNDARY_RTOL * total
}

fn nonzero_energy(x: &RealMatrix, measure: &'static str) -> Result<f64> {
    let total = frobenius_sq(x);
    if total == 0.0 {
        return Err(Error::UndefinedMeasure {
            measure,
            reason: "matrix is zero".into(),
        });
    }
    Ok(total)
}

/// `t_sim(X) = ‖Π₁X‖²/‖X‖²`.
pub fn token_similarity(x: &RealMatrix) -> Result<f64> {
    let total = nonzero_energy(x, "token similarity")?;
    Ok((mean_part_sq(x) / total).min(1.0))
}

/// `t_div(X) = ‖Π⊥X‖²/‖X‖²`, from the centered part directly.
pub fn token_diversity(x: &RealMatrix) -> Result<f64> {
    let total = nonzero_energy(x, "token diversity")?;
    Ok((complement_part_sq(x) / total).min(1.0))
}

/// Average pairwise cosine similarity of the rows.
pub fn cosine_similarity(x: &RealMatrix) -> Result<f64> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::UndefinedMeasure {
            measure: "cosine similarity",
            reason: format!("needs at least two rows, got {n}"),
        });
    }
    let mut unit = x.clone();
    for i in 0..n {
        let row = unit.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::UndefinedMeasure {
                measure: "cosine similarity",
                reason: format!("row {i} is zero"),
            });
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    // Σ_{i<j} cos = (‖Σ_i u_i‖² − n)/2.
    let sum: f64 = unit.column_sums().iter().map(|s| s * s).sum();
    let pairs = (n * (n - 1)) as f64;
    Ok(((sum - n as f64) / pairs).clamp(-1.0, 1.0))
}

/// Mean and complement energies, refusing the boundary cases.
fn interior_parts(x: &RealMatrix, quantity: &'static str) -> Result<(f64, f64)> {
    let (mean, comp) = (mean_part_sq(x), complement_part_sq(x));
    let total = mean + comp;
    if total == 0.0 {
        return Err(Error::SimilarityBoundary { quantity, t_sim: f64::NAN });
    }
    if vanishes(comp, total) {
        return Err(Error::SimilarityBoundary { quantity, t_sim: 1.0 });
    }
    if vanishes(mean, total) {
        return Err(Error::SimilarityBoundary { quantity, t_sim: 0.0 });
    }
    Ok((mean, comp))
}

/// `r(X, Y) = t_div(X)/t_div(Y)`.
pub fn escalation_rate(x: &RealMatrix, y: &RealMatrix) -> Result<f64> {
    let (mx, cx) = interior_parts(x, "escalation rate")?;
    let (my, cy) = interior_parts(y, "escalation rate")?;
    Ok((cx / (mx + cx)) / (cy / (my + cy)))
}

/// `(ξ₁, ξ₂) = (‖Π₁Y‖²/‖Π₁X‖², ‖Π⊥Y‖²/‖Π⊥X‖²)`.
pub fn xi_pair(x: &RealMatrix, y: &RealMatrix) -> Result<(f64, f64)> {
    if x.shape() != y.shape() {
        return Err(Error::shape("xi_pair", format!("{}x{}", x.rows(), x.cols()), format!("{}x{}", y.rows(), y.cols())));
    }
    let (mx, cx) = projector_parts(x, "xi")?;
    Ok((mean_part_sq(y) / mx, complement_part_sq(y) / cx))
}

fn projector_parts(x: &RealMatrix, quantity: &'static str) -> Result<(f64, f64)> {
    let (mx, cx) = (mean_part_sq(x), complement_part_sq(x));
    if vanishes(mx, mx + cx) {
        return Err(Error::Boundary { quantity, projector: Projector::Mean });
    }
    if vanishes(cx, mx + cx) {
        return Err(Error::Boundary { quantity, projector: Projector::Complement });
    }
    Ok((mx, cx))
}

/// `(μ₁, μ₂) = (‖Π₁PX‖/‖Π₁X‖, ‖Π⊥PX‖/‖Π⊥X‖)`.
pub fn mu_pair(x: &RealMatrix, p: &AttentionMatrix) -> Result<(f64, f64)> {
    mu_pair_from_product(x, &p.apply(x)?)
}

/// [`mu_pair`] with `PX` already computed.
pub fn mu_pair_from_product(x: &RealMatrix, px: &RealMatrix) -> Result<(f64, f64)> {
    let (mx, cx) = projector_parts(x, "mu")?;
    Ok(((mean_part_sq(px) / mx).sqrt(), (complement_part_sq(px) / cx).sqrt()))
}

/// `ω = ‖eᵀPΠ⊥X‖/‖eᵀX‖` with `e = 𝟙/√n`.
pub fn omega(x: &RealMatrix, p: &AttentionMatrix) -> Result<f64> {
    if p.n() != x.rows() {
        return Err(Error::shape("omega", format!("P of order {}", x.rows()), format!("order {}", p.n())));
    }
    // The 1/√n factors cancel; column sums of P stand in for eᵀP.
    let denom: f64 = x.column_sums().iter().map(|s| s * s).sum::<f64>().sqrt();
    if denom == 0.0 || vanishes(mean_part_sq(x), frobenius_sq(x)) {
        return Err(Error::Boundary { quantity: "omega", projector: Projector::Mean });
    }
    let weights = p.matrix().column_sums();
    let num = project_complement(x).left_mul_vec(&weights)?;
    Ok(num.iter().map(|v| v * v).sum::<f64>().sqrt() / denom)
}

/// Realized `η = E[ξ₁]/E[ξ₂] − ξ₁/ξ₂`.
pub fn eta_sample(x: &RealMatrix, y: &RealMatrix, expected_xi1: f64, expected_xi2: f64) -> Result<f64> {
    if !(expected_xi2 > 0.0) {
        return Err(Error::InvalidParameter(format!("expected xi2 must be positive, got {expected_xi2}")));
    }
    let (xi1, xi2) = xi_pair(x, y)?;
    if xi2 == 0.0 {
        return Err(Error::Boundary { quantity: "eta", projector: Projector::Complement });
    }
    Ok(expected_xi1 / expected_xi2 - xi1 / xi2)
}

/// Measurements taken across one step of one block. Quantities that are
/// undefined at that point (a vanishing projector part, no attention in the
/// step) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub block_index: usize,
    pub step_index: usize,
    pub t_sim: f64,
    pub t_div: f64,
    pub t_cos: Option<f64>,
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
    pub xi_ratio: Option<f64>,
    pub omega: Option<f64>,
    pub delta: Option<f64>,
    pub lambda2_modulus: Option<f64>,
    pub r_rate: Option<f64>,
}

impl DiagnosticsRecord {
    /// Measures the step `x → y`; `t_sim`, `t_div`, `t_cos` refer to `y`.
    pub fn measure(block_index: usize, step_index: usize, x: &RealMatrix, y: &RealMatrix) -> Result<Self> {
        let t_sim = token_similarity(y)?;
        let t_div = token_diversity(y)?;
        let (xi1, xi2) = match xi_pair(x, y) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(_) => (None, None),
        };
        let xi_ratio = match (xi1, xi2) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        Ok(DiagnosticsRecord {
            block_index,
            step_index,
            t_sim,
            t_div,
            t_cos: cosine_similarity(y).ok(),
            xi1,
            xi2,
            xi_ratio,
            omega: None,
            delta: None,
            lambda2_modulus: None,
            r_rate: escalation_rate(x, y).ok(),
        })
    }
}
