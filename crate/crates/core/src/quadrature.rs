//! Quadrature rules on the reference triangle and on intervals.

use alloc::vec::Vec;

/// Barycentric point with a weight normalized to sum to one over the
/// triangle (multiply by the area).
pub type TrianglePoint = ([f64; 3], f64);

/// Seven-point rule exact for polynomials of degree 5.
pub fn triangle_degree5() -> [TrianglePoint; 7] {
    let r15 = libm::sqrt(15.0);
    let (a1, b1, w1) = ((9.0 + 2.0 * r15) / 21.0, (6.0 - r15) / 21.0, (155.0 - r15) / 1200.0);
    let (a2, b2, w2) = ((9.0 - 2.0 * r15) / 21.0, (6.0 + r15) / 21.0, (155.0 + r15) / 1200.0);
    let third = 1.0 / 3.0;
    [
        ([third, third, third], 9.0 / 40.0),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Collapsed (Duffy) tensor Gauss rule with `n * n` points, exact for
/// polynomials of degree `2n - 2` on the triangle.
pub fn triangle_collapsed(n: usize) -> Vec<TrianglePoint> {
    let gl = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(xi, wi) in &gl {
        let u = 0.5 * (xi + 1.0);
        for &(xj, wj) in &gl {
            let v = 0.5 * (xj + 1.0);
            // (u, v) in the unit square -> (l1, l2) = (u, (1 - u) v)
            let l1 = u;
            let l2 = (1.0 - u) * v;
            // Jacobian (1 - u), reference area 1/2, normalized to weight sum 1.
            let w = 0.25 * wi * wj * (1.0 - u) * 2.0;
            out.push(([1.0 - l1 - l2, l1, l2], w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(a: u32, b: u32, c: u32) -> f64 {
        // Normalized: (1 / area) * int l0^a l1^b l2^c = 2 a! b! c! / (a+b+c+2)!
        let fact = |k: u32| (1..=k).map(|i| i as f64).product::<f64>();
        2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(6);
        let sum_w: f64 = rule.iter().map(|r| r.1).sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        // int x^10 = 2/11
        let s: f64 = rule.iter().map(|&(x, w)| w * libm::pow(x, 10.0)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn degree5_rule_is_exact() {
        let rule = triangle_degree5();
        for (a, b, c) in [(0, 0, 0), (2, 1, 1), (5, 0, 0), (1, 2, 2), (3, 1, 1)] {
            let s: f64 = rule
                .iter()
                .map(|&(l, w)| w * libm::pow(l[0], a as f64) * libm::pow(l[1], b as f64) * libm::pow(l[2], c as f64))
                .sum();
            assert!((s - monomial_exact(a, b, c)).abs() < 1e-14, "{a}{b}{c}");
        }
    }

    #[test]
    fn collapsed_rule_is_exact() {
        let rule = triangle_collapsed(5);
        for (a, b, c) in [(2, 2, 2), (4, 2, 1), (0, 0, 8)] {
            let s: f64 = rule
                .iter()
                .map(|&(l, w)| w * libm::pow(l[0], a as f64) * libm::pow(l[1], b as f64) * libm::pow(l[2], c as f64))
                .sum();
            assert!((s - monomial_exact(a, b, c)).abs() < 1e-14, "{a}{b}{c}");
        }
    }
}
