//! Eigenvalues of a dense real nonsymmetric matrix.
//!
//! Householder reduction to upper Hessenberg form followed by the Francis
//! implicit double-shift QR iteration (the EISPACK `orthes`/`hqr` pair,
//! eigenvalues only). Complex conjugate pairs are read off the 2×2 diagonal
//! blocks of the converged real Schur form.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

/// Largest matrix order accepted by [`real_schur_eigenvalues`].
pub const MAX_ORDER: usize = 1024;

/// Total QR sweep budget is `SWEEPS_PER_ORDER · n`.
const SWEEPS_PER_ORDER: usize = 30;

/// All `n` eigenvalues of a square matrix, in the order they deflate.
pub fn real_schur_eigenvalues(a: &RealMatrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::shape(
            "real_schur_eigenvalues",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let n = a.rows();
    if n > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue solver supports n <= {MAX_ORDER}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = to_rows(a);
    hessenberg_in_place(&mut h);
    francis_qr(&mut h)
}

fn to_rows(a: &RealMatrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

/// Upper Hessenberg matrix orthogonally similar to `a`.
pub fn hessenberg(a: &RealMatrix) -> Result<RealMatrix> {
    if !a.is_square() {
        return Err(Error::shape("hessenberg", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let mut h = to_rows(a);
    hessenberg_in_place(&mut h);
    RealMatrix::from_rows(&h)
}

fn hessenberg_in_place(h: &mut [Vec<f64>]) {
    let n = h.len();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // H ← (I − u uᵀ/hh) H (I − u uᵀ/hh)
        for j in m..n {
            let f = (m..=high).rev().map(|i| ort[i] * h[i][j]).sum::<f64>() / hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let f = (m..=high).rev().map(|j| ort[j] * row[j]).sum::<f64>() / hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
        for i in m + 1..=high {
            h[i][m - 1] = 0.0;
        }
    }
}

fn francis_qr(h: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let nn = h.len();
    let eps = f64::EPSILON;
    let mut wr = vec![0.0; nn];
    let mut wi = vec![0.0; nn];

    let mut norm = 0.0;
    for (i, row) in h.iter().enumerate() {
        for v in &row[i.saturating_sub(1)..nn] {
            norm += v.abs();
        }
    }

    let budget = SWEEPS_PER_ORDER * nn;
    let mut total_iter = 0usize;
    let mut iter = 0usize;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut x, mut y, mut w);

    // `n` is the index of the bottom of the active block; isize so it can
    // step below zero when the last eigenvalue deflates.
    let mut n = nn as isize - 1;
    while n >= 0 {
        let nu = n as usize;
        // Find the lowest negligible subdiagonal element.
        let mut l = nu;
        while l > 0 {
            s = h[l - 1][l - 1].abs() + h[l][l].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[l][l - 1].abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            // One real root.
            wr[nu] = h[nu][nu] + exshift;
            wi[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            // A 2×2 block: real pair or complex conjugate pair.
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            x = h[nu][nu] + exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                wr[nu - 1] = x + z;
                wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = z;
                wi[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            if total_iter >= budget {
                return Err(Error::Convergence {
                    method: "francis double-shift QR",
                    iterations: total_iter,
                    last: h[nu][nu - 1].abs(),
                });
            }
            x = h[nu][nu];
            y = h[nu - 1][nu - 1];
            w = h[nu][nu - 1] * h[nu - 1][nu];

            // Exceptional shifts break cycles on pathological inputs.
            if iter == 10 {
                exshift += x;
                for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                        row[i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            loop {
                z = h[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - z - r - s;
                r = h[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let lhs = h[m][m - 1].abs() * (q.abs() + r.abs());
                let rhs = eps * (p.abs() * (h[m - 1][m - 1].abs() + z.abs() + h[m + 1][m + 1].abs()));
                if lhs < rhs {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[i][i - 2] = 0.0;
                if i > m + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[k][k - 1] = -s * x;
                } else if l != m {
                    h[k][k - 1] = -h[k][k - 1];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..=nu {
                    let mut pp = h[k][j] + q * h[k + 1][j];
                    if notlast {
                        pp += r * h[k + 2][j];
                        h[k + 2][j] -= pp * z;
                    }
                    h[k][j] -= pp * x;
                    h[k + 1][j] -= pp * y;
                }
                let top = nu.min(k + 3);
                for row in h.iter_mut().take(top + 1).skip(l) {
                    let mut pp = x * row[k] + y * row[k + 1];
                    if notlast {
                        pp += z * row[k + 2];
                        row[k + 2] -= pp * r;
                    }
                    row[k] -= pp;
                    row[k + 1] -= pp * q;
                }
            }
        }
    }

    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn upper_triangular_gives_diagonal() {
        let a = RealMatrix::from_rows(&[
            vec![3.0, 1.0, -2.0, 0.5],
            vec![0.0, -1.0, 4.0, 2.0],
            vec![0.0, 0.0, 0.25, 7.0],
            vec![0.0, 0.0, 0.0, 2.0],
        ])
        .unwrap();
        let ev = sorted(real_schur_eigenvalues(&a).unwrap());
        let expected = [-1.0, 0.25, 2.0, 3.0];
        for (e, x) in ev.iter().zip(expected) {
            assert!((e.re - x).abs() < 1e-12 && e.im.abs() < 1e-12, "{e} vs {x}");
        }
    }

    #[test]
    fn rotation_by_ninety_degrees() {
        let a = RealMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let ev = sorted(real_schur_eigenvalues(&a).unwrap());
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn one_by_one_and_empty() {
        let a = RealMatrix::from_rows(&[vec![-4.5]]).unwrap();
        assert_eq!(real_schur_eigenvalues(&a).unwrap(), vec![Complex64::new(-4.5, 0.0)]);
        assert!(real_schur_eigenvalues(&RealMatrix::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn zero_matrix() {
        let ev = real_schur_eigenvalues(&RealMatrix::zeros(5, 5)).unwrap();
        assert!(ev.iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn hessenberg_has_zero_lower_part_and_keeps_trace() {
        let a = RealMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let h = hessenberg(&a).unwrap();
        for i in 0..6usize {
            for j in 0..i.saturating_sub(1) {
                assert_eq!(h.get(i, j), 0.0);
            }
        }
        let tr_a: f64 = (0..6).map(|i| a.get(i, i)).sum();
        let tr_h: f64 = (0..6).map(|i| h.get(i, i)).sum();
        assert!((tr_a - tr_h).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_sum_and_product_match_trace_and_det() {
        // Companion-like 3×3 with roots 1, 2, 3.
        let a = RealMatrix::from_rows(&[vec![6.0, -11.0, 6.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let ev = sorted(real_schur_eigenvalues(&a).unwrap());
        for (e, x) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e.re - x).abs() < 1e-10 && e.im.abs() < 1e-10, "{e}");
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(real_schur_eigenvalues(&RealMatrix::zeros(2, 3)).is_err());
    }
}
