//! Spectral quantities of attention matrices: `δ = ‖Π⊥P‖₂` and `|λ₂(P)|`.

mod schur;

pub use schur::{hessenberg, real_schur_eigenvalues, MAX_ORDER};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{frobenius_sq, norm, project_complement, RealMatrix};
use crate::rng::splitmix64;
use crate::transformer::AttentionMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralReport {
    /// `‖Π⊥P‖₂`.
    pub delta: f64,
    /// `|λ₂(P)|`, the second largest eigenvalue modulus.
    pub lambda2_modulus: f64,
    /// `1 − |λ₂(P)|²`.
    pub spectral_gap_sym: f64,
}

impl SpectralReport {
    pub fn new(delta: f64, lambda2_modulus: f64) -> Self {
        SpectralReport {
            delta,
            lambda2_modulus,
            spectral_gap_sym: 1.0 - lambda2_modulus * lambda2_modulus,
        }
    }
}

/// Largest singular value by power iteration on `aᵀa`.
///
/// The start vector is fixed (all-ones plus a hashed per-index offset in
/// `[−½, ½)`), so results are reproducible. The offset is not small: for
/// `a = Π⊥P` the all-ones direction is in the null space, and a small or
/// regular offset can be orthogonal to the top singular vector of a
/// structured `P`. Iteration stops when the Rayleigh estimate
/// `‖a v‖` changes by at most `tol` relative.
pub fn spectral_norm(a: &RealMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if frobenius_sq(a) == 0.0 {
        return Ok(0.0);
    }
    let n = a.cols();
    let mut v: Vec<f64> = (0..n)
        .map(|i| 0.5 + (splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    normalize(&mut v);

    let mut sigma = 0.0;
    let mut restarted = false;
    for _ in 0..max_iter {
        let av = a.mul_vec(&v)?;
        let estimate = norm(&av);
        let mut w = a.left_mul_vec(&av)?;
        let wn = norm(&w);
        if wn == 0.0 {
            // Start vector fell into the null space; restart on the
            // heaviest column's coordinate axis.
            if restarted {
                return Ok(estimate);
            }
            restarted = true;
            let heaviest = (0..n)
                .max_by(|&i, &j| column_norm_sq(a, i).total_cmp(&column_norm_sq(a, j)))
                .unwrap_or(0);
            v = vec![0.0; n];
            v[heaviest] = 1.0;
            continue;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        if (estimate - sigma).abs() <= tol * estimate {
            return Ok(estimate.max(sigma));
        }
        sigma = estimate;
    }
    Err(Error::Convergence {
        method: "power iteration",
        iterations: max_iter,
        last: sigma,
    })
}

fn column_norm_sq(a: &RealMatrix, j: usize) -> f64 {
    (0..a.rows()).map(|i| a.get(i, j).powi(2)).sum()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

/// `δ = ‖Π⊥P‖₂` with the default tolerance and budget.
pub fn delta(p: &AttentionMatrix) -> Result<f64> {
    spectral_norm(&project_complement(p.matrix()), DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// `|λ₂(P)|` for a row-stochastic `P`.
///
/// Computed as the spectral radius of `M = Π⊥PΠ⊥`. Because `P𝟙 = 𝟙`, in any
/// orthonormal basis `[e, Q]` with `e = 𝟙/√n` the matrix `P` is block upper
/// triangular with diagonal blocks `1` and `QᵀPQ`, so
/// `spec(P) = {1} ∪ spec(QᵀPQ)`. `M` is `QᵀPQ` embedded with an extra zero
/// eigenvalue on `e`, hence its largest modulus is `|λ₂(P)|`. Working on `M`
/// means the known eigenvalue 1 never has to be told apart from strays near 1.
pub fn second_eigenvalue_modulus(p: &AttentionMatrix) -> Result<f64> {
    let m = deflated(p.matrix());
    let eigenvalues = real_schur_eigenvalues(&m)?;
    Ok(eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `Π⊥ A Π⊥`.
fn deflated(a: &RealMatrix) -> RealMatrix {
    let left = project_complement(a);
    // Right-multiplying by Π⊥ removes each row's mean.
    let mut out = left;
    let cols = out.cols() as f64;
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / cols;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

pub fn spectral_report(p: &AttentionMatrix) -> Result<SpectralReport> {
    Ok(SpectralReport::new(delta(p)?, second_eigenvalue_modulus(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_identity_and_diagonal() {
        assert!((spectral_norm(&RealMatrix::identity(6), 1e-12, 100).unwrap() - 1.0).abs() < 1e-12);
        let d = RealMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        assert!((spectral_norm(&d, 1e-12, 1000).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_zero_and_null_start() {
        assert_eq!(spectral_norm(&RealMatrix::zeros(3, 3), 1e-10, 10).unwrap(), 0.0);
        // Π⊥ annihilates the all-ones start direction.
        let c = project_complement(&RealMatrix::identity(4));
        assert!((spectral_norm(&c, 1e-12, 1000).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_reports_non_convergence() {
        let a = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.999_999]]).unwrap();
        let err = spectral_norm(&a, 1e-15, 2).unwrap_err();
        assert!(err.is_convergence());
    }

    #[test]
    fn identity_and_uniform_attention() {
        let n = 5;
        let id = AttentionMatrix::new(RealMatrix::identity(n)).unwrap();
        assert!((second_eigenvalue_modulus(&id).unwrap() - 1.0).abs() < 1e-12);
        assert!((delta(&id).unwrap() - 1.0).abs() < 1e-10);

        let uniform = AttentionMatrix::new(RealMatrix::filled(n, n, 1.0 / n as f64)).unwrap();
        assert!(second_eigenvalue_modulus(&uniform).unwrap() < 1e-12);
        assert!(delta(&uniform).unwrap() < 1e-12);
    }

    #[test]
    fn report_gap_is_exact() {
        let p = AttentionMatrix::new(
            RealMatrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.25, 0.5, 0.25], vec![0.0, 0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        let r = spectral_report(&p).unwrap();
        assert_eq!(r.spectral_gap_sym, 1.0 - r.lambda2_modulus * r.lambda2_modulus);
        // Eigenvalues 1, 0.5, 0.
        assert!((r.lambda2_modulus - 0.5).abs() < 1e-12);
    }
}
