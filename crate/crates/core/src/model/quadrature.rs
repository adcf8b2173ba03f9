//! Gauss-Hermite and Gauss-Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights for `∫ g(x) e^{-x²} dx` with `order` points.
///
/// The root-finding initial guesses are reliable up to 128 nodes.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite recurrence.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[g(Z)]` for a standard normal `Z` using an `order`-point Gauss-Hermite rule.
pub fn normal_expectation(order: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(order);
    let scale = std::f64::consts::SQRT_2;
    let norm = 1.0 / PI.sqrt();
    // Ascending node order keeps the summation deterministic.
    x.iter()
        .zip(&w)
        .rev()
        .map(|(&xi, &wi)| wi * norm * g(scale * xi))
        .sum()
}

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const PANEL_ORDER: usize = 16;

/// Composite 16-point Gauss-Legendre over `[a, b]` with `panels` equal panels.
pub fn composite_legendre(a: f64, b: f64, panels: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(PANEL_ORDER);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let panel: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * g(mid + 0.5 * h * xi))
            .sum();
        total += 0.5 * h * panel;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for order in [8, 32, 64, 100, 128] {
            let m0 = normal_expectation(order, |_| 1.0);
            let m2 = normal_expectation(order, |z| z * z);
            let m4 = normal_expectation(order, |z| z.powi(4));
            assert!((m0 - 1.0).abs() < 1e-13, "order {order}: {m0}");
            assert!((m2 - 1.0).abs() < 1e-12, "order {order}: {m2}");
            assert!((m4 - 3.0).abs() < 1e-11, "order {order}: {m4}");
        }
    }

    #[test]
    fn hermite_lognormal_mean() {
        let sigma: f64 = 0.4;
        let e = normal_expectation(64, |z| (sigma * z).exp());
        assert!((e - (0.5 * sigma * sigma).exp()).abs() < 1e-14);
    }

    #[test]
    fn legendre_polynomials_exact() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((q - 2.0 / 31.0).abs() < 1e-14);
        let v = composite_legendre(0.0, 1.0, 4, |t| t.exp());
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
    }
}
