//! Small-matrix reference computations that share no code with the crate's
//! solvers.

use num_complex::Complex64;
use tselab::RealMatrix;

/// Coefficients `c[0..=n]` of `det(zI − A) = Σ c[k] zᵏ` by Faddeev–LeVerrier.
pub fn char_poly(a: &RealMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A M_{k−1} + c_{n−k+1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| a.get(i, l) * m[l][j]).sum::<f64>();
            }
            next[i][i] += c[n - k + 1];
        }
        m = next;
        let trace: f64 = (0..n).map(|i| (0..n).map(|l| a.get(i, l) * m[l][i]).sum::<f64>()).sum();
        c[n - k] = -trace / k as f64;
    }
    c
}

fn horner(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
}

fn horner_derivative(c: &[f64], z: Complex64) -> Complex64 {
    let n = c.len() - 1;
    (1..=n).rev().fold(Complex64::new(0.0, 0.0), |acc, k| acc * z + c[k] * k as f64)
}

/// Roots of the monic polynomial `c` by Durand–Kerner, polished by Newton.
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * (radius / 2.0)).collect();
    for _ in 0..5000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let denom = (0..n).filter(|&j| j != i).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            let step = horner(c, z[i]) / denom;
            z[i] -= step;
            change = change.max(step.norm());
        }
        if change < 1e-15 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = horner_derivative(c, *zi);
            if d.norm() > 0.0 {
                *zi -= horner(c, *zi) / d;
            }
        }
    }
    z
}

pub fn eigenvalues(a: &RealMatrix) -> Vec<Complex64> {
    poly_roots(&char_poly(a))
}

/// `|λ₂|` of a row-stochastic matrix: drop the eigenvalue nearest 1, take
/// the largest remaining modulus.
pub fn lambda2_modulus(p: &RealMatrix) -> f64 {
    let mut ev = eigenvalues(p);
    let one = Complex64::new(1.0, 0.0);
    let k = (0..ev.len())
        .min_by(|&a, &b| (ev[a] - one).norm().total_cmp(&(ev[b] - one).norm()))
        .unwrap();
    ev.remove(k);
    ev.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value by one-sided Jacobi rotations on the columns.
pub fn jacobi_sigma_max(a: &RealMatrix) -> f64 {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Greedy pairing of two eigenvalue lists; returns the worst distance.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut left: Vec<Complex64> = b.to_vec();
    let mut worst = 0.0f64;
    for z in a {
        let k = (0..left.len()).min_by(|&i, &j| (left[i] - z).norm().total_cmp(&(left[j] - z).norm())).unwrap();
        worst = worst.max((left[k] - z).norm());
        left.remove(k);
    }
    worst
}
