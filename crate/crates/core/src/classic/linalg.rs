// Small dense helpers for per-RE detection (N_T <= 4, N_RX modest).

use num_complex::Complex64;

/// Inverse of a square complex matrix (row-major) by Gauss-Jordan with
/// partial pivoting. `None` when a pivot vanishes.
pub(crate) fn invert(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut m = a.to_vec();
    let mut inv = vec![zero; n * n];
    for i in 0..n {
        inv[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x * n + col].norm().total_cmp(&m[y * n + col].norm()))?;
        if m[pivot * n + col].norm() == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let p = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == zero {
                continue;
            }
            for j in 0..n {
                let (mv, iv) = (m[col * n + j], inv[col * n + j]);
                m[r * n + j] -= f * mv;
                inv[r * n + j] -= f * iv;
            }
        }
    }
    Some(inv)
}

/// Householder QR of a real `rows × cols` matrix (row-major, rows >= cols).
/// Returns the `cols × cols` upper-triangular R and `Qᵀ b` (length `rows`).
pub(crate) fn qr_apply(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut r = a.to_vec();
    let mut qtb = b.to_vec();
    for k in 0..cols {
        let norm: f64 = (k..rows).map(|i| r[i * cols + k].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i - k] * r[i * cols + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..rows {
                r[i * cols + j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..rows).map(|i| v[i - k] * qtb[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..rows {
            qtb[i] -= f * v[i - k];
        }
    }
    let mut upper = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in i..cols {
            upper[i * cols + j] = r[i * cols + j];
        }
    }
    (upper, qtb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a: Vec<Complex64> = (0..9)
            .map(|i| {
                Complex64::new(
                    (i as f64 * 0.7).sin() + if i % 4 == 0 { 2.0 } else { 0.0 },
                    (i as f64).cos(),
                )
            })
            .collect();
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: Complex64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).norm() < 1e-12);
            }
        }
        assert!(invert(&[Complex64::new(0.0, 0.0); 4], 2).is_none());
    }

    #[test]
    fn qr_preserves_least_squares_geometry() {
        let (rows, cols) = (5, 3);
        let a: Vec<f64> = (0..rows * cols).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let b: Vec<f64> = (0..rows).map(|i| i as f64 - 1.5).collect();
        let (r, qtb) = qr_apply(&a, rows, cols, &b);
        // ‖b − A x‖² = ‖Qᵀb[..n] − R x‖² + ‖Qᵀb[n..]‖² for any x
        let x = [0.3, -1.2, 0.8];
        let direct: f64 = (0..rows)
            .map(|i| (b[i] - (0..cols).map(|j| a[i * cols + j] * x[j]).sum::<f64>()).powi(2))
            .sum();
        let via_qr: f64 = (0..cols)
            .map(|i| (qtb[i] - (0..cols).map(|j| r[i * cols + j] * x[j]).sum::<f64>()).powi(2))
            .sum::<f64>()
            + qtb[cols..].iter().map(|v| v * v).sum::<f64>();
        assert!((direct - via_qr).abs() < 1e-12);
    }
}
