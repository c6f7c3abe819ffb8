//! Hermite polynomials, Hermite functions and the Gauss rules built on them.

use nalgebra::{DMatrix, SymmetricEigen};

/// Probabilists' Hermite polynomial `h_n(x)`: `h_{n+1} = x h_n − n h_{n−1}`.
pub fn hermite_poly(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if n == 0 {
        return h0;
    }
    for m in 1..n {
        let h2 = x * h1 - m as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `h_0(x), …, h_n(x)` in one pass.
pub fn hermite_poly_all(n: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n == 0 {
        return;
    }
    out.push(x);
    for m in 1..n {
        let v = x * out[m] - m as f64 * out[m - 1];
        out.push(v);
    }
}

/// Hermite function `e_k(t) = π^{−1/4}((k−1)!)^{−1/2} e^{−t²/2} h_{k−1}(√2 t)`, `k ≥ 1`.
///
/// Evaluated through the orthonormal three-term recurrence, never through factorials.
pub fn hermite_function(k: usize, t: f64) -> f64 {
    assert!(k >= 1, "Hermite functions are 1-based");
    let mut v = Vec::with_capacity(k);
    hermite_functions(k, t, &mut v);
    v[k - 1]
}

/// `e_1(t), …, e_k(t)`.
pub fn hermite_functions(k: usize, t: f64, out: &mut Vec<f64>) {
    hermite_recurrence(k, t, (-0.5 * t * t).exp(), out);
}

/// `e_k(t) e^{t²/2}`: orthonormal polynomials for the weight `e^{−t²}`.
pub fn hermite_functions_unweighted(k: usize, t: f64, out: &mut Vec<f64>) {
    hermite_recurrence(k, t, 1.0, out);
}

fn hermite_recurrence(k: usize, t: f64, gauss: f64, out: &mut Vec<f64>) {
    out.clear();
    if k == 0 {
        return;
    }
    let e1 = std::f64::consts::PI.powf(-0.25) * gauss;
    out.push(e1);
    if k == 1 {
        return;
    }
    out.push(std::f64::consts::SQRT_2 * t * e1);
    for m in 2..k {
        // e_{m+1} = √(2/m) t e_m − √((m−1)/m) e_{m−1}
        let mf = m as f64;
        let v = (2.0 / mf).sqrt() * t * out[m - 1] - ((mf - 1.0) / mf).sqrt() * out[m - 2];
        out.push(v);
    }
}

/// Gauss–Hermite rule for `∫ g(x) e^{−x²} dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut x: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Newton polish on p_n, then Christoffel weights 1 / Σ p_k(x)²
    let mut buf = Vec::with_capacity(n + 1);
    for xi in x.iter_mut() {
        for _ in 0..3 {
            hermite_functions_unweighted(n + 1, *xi, &mut buf);
            // p_n' = √(2n) p_{n−1} for the orthonormal family
            let d = (2.0 * n as f64).sqrt() * buf[n - 1];
            if d != 0.0 {
                *xi -= buf[n] / d;
            }
        }
    }
    let w = x
        .iter()
        .map(|&xi| {
            hermite_functions_unweighted(n, xi, &mut buf);
            1.0 / buf.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (x, w)
}

/// Gauss–Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * z * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|&xi| c + h * xi).collect(), w.iter().map(|&wi| h * wi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_values() {
        assert_eq!(hermite_poly(0, 3.3), 1.0);
        assert_eq!(hermite_poly(3, 2.0), 2.0);
        assert_eq!(hermite_poly(5, 1.0), 6.0);
        // h_2 = x² − 1
        assert!((hermite_poly(2, 1.7) - (1.7 * 1.7 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn derivative_identity() {
        // h'_n = n h_{n−1}
        let x = 0.37;
        let eps = 1e-6;
        for n in 1..8 {
            let d = (hermite_poly(n, x + eps) - hermite_poly(n, x - eps)) / (2.0 * eps);
            assert!((d - n as f64 * hermite_poly(n - 1, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn function_values() {
        assert!((hermite_function(1, 0.0) - 0.751_125_544_464_942_5).abs() < 1e-15);
        assert_eq!(hermite_function(2, 0.0), 0.0);
        // k = 4 against the closed form with h_3(√2 t)
        let t: f64 = 0.8;
        let naive = std::f64::consts::PI.powf(-0.25) / 6f64.sqrt()
            * (-0.5 * t * t).exp()
            * hermite_poly(3, std::f64::consts::SQRT_2 * t);
        assert!((hermite_function(4, t) - naive).abs() < 1e-14);
    }

    #[test]
    fn functions_stay_bounded() {
        let mut v = Vec::new();
        for i in 0..400 {
            let t = -20.0 + 0.1 * i as f64;
            hermite_functions(200, t, &mut v);
            assert!(v.iter().all(|x| x.abs() < 0.8));
        }
    }

    #[test]
    fn orthonormal_under_gauss_hermite() {
        let (x, w) = gauss_hermite(40);
        let mut v = Vec::new();
        let k = 20;
        let mut g = vec![0.0; k * k];
        for (xi, wi) in x.iter().zip(&w) {
            hermite_functions_unweighted(k, *xi, &mut v);
            for a in 0..k {
                for b in 0..k {
                    g[a * k + b] += wi * v[a] * v[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((g[a * k + b] - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_on(6, 0.0, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(11)).sum();
        assert!((s - 2f64.powi(12) / 12.0).abs() < 1e-10);
    }
}
