//! Gauss-Legendre quadrature with adaptive interval bisection.

use std::sync::OnceLock;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// 32-point rule on [0, 1]; used for smooth fixed-cost double integrals.
pub fn rule32_unit() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(32);
        (
            nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights.iter().map(|w| 0.5 * w).collect(),
        )
    })
}

fn fixed64(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule64();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

fn adaptive_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = fixed64(f, a, mid);
    let right = fixed64(f, mid, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= tol * refined.abs().max(f64::MIN_POSITIVE) {
        refined
    } else {
        adaptive_panel(f, a, mid, left, tol, depth - 1)
            + adaptive_panel(f, mid, b, right, tol, depth - 1)
    }
}

/// Adaptive 64-point Gauss-Legendre integral of `f` over `[a, b]`.
///
/// `breakpoints` seeds the initial subdivision; pass the locations of any
/// narrow features so the first panels cannot step over them.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
) -> f64 {
    if a >= b {
        return 0.0;
    }
    let mut edges: Vec<f64> = vec![a, b];
    edges.extend(breakpoints.iter().filter(|&&x| x > a && x < b));
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let whole = fixed64(&f, pair[0], pair[1]);
        total += adaptive_panel(&f, pair[0], pair[1], whole, rel_tol, 24);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_integrate_polynomials_exactly() {
        // A 64-point rule is exact for degree <= 127.
        let f = |x: f64| x.powi(10) - 3.0 * x.powi(5) + 2.0;
        let exact = 2.0 / 11.0 + 4.0; // odd term vanishes on [-1, 1]
        let got = fixed64(&f, -1.0, 1.0);
        assert!((got - exact).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [8, 32, 64] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn adaptive_handles_narrow_gaussian() {
        // A spike of width 1e-4 inside [0, 1]; a single 64-point panel
        // would miss it without the breakpoint seed.
        let w = 1e-4;
        let c = 0.37;
        let f = |x: f64| (-(x - c) * (x - c) / (2.0 * w * w)).exp();
        let got = integrate_adaptive(f, 0.0, 1.0, &[c - 8.0 * w, c, c + 8.0 * w], 1e-12);
        let exact = w * (2.0 * std::f64::consts::PI).sqrt();
        assert!(((got - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn adaptive_matches_analytic_exponential() {
        let got = integrate_adaptive(|x| (-2.0 * x).exp(), 0.0, 3.0, &[], 1e-13);
        let exact = (1.0 - (-6.0_f64).exp()) / 2.0;
        assert!(((got - exact) / exact).abs() < 1e-13);
    }
}
