//! Composite quadrature rules backing the steady-state oracles.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{PosError, Result};
use crate::fm;
use crate::stats::pairwise_sum;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be >= 1");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = fm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if fm::abs(dx) < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre integration of `f` over `[a, b]` with `panels`
/// equal panels of the given order. Panel contributions are combined
/// pairwise.
pub fn integrate_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut partial = Vec::with_capacity(panels);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            s += w * f(mid + half * x);
        }
        partial.push(s * half);
    }
    pairwise_sum(&partial)
}

/// Composite Simpson integration over `[a, b]` with `intervals`
/// subintervals (rounded up to even). An independent rule for
/// cross-checking the Gauss–Legendre path.
pub fn integrate_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 }.max(2);
    let h = (b - a) / n as f64;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(w * f(x));
    }
    pairwise_sum(&terms) * h / 3.0
}

/// Expectation `∫ f·e^{ℓ} / ∫ e^{ℓ}` over `[lo, hi]`, with the log-weight
/// shifted by its maximum over the panel grid before exponentiation.
pub fn expectation_on_interval<L, F>(
    log_weight: L,
    f: F,
    lo: f64,
    hi: f64,
    panels: usize,
    order: usize,
) -> Result<f64>
where
    L: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    if !(hi > lo) || panels == 0 || order == 0 {
        return Err(PosError::InvalidInput("bad quadrature interval or resolution"));
    }
    let mut ell_max = f64::NEG_INFINITY;
    let scan = 4 * panels;
    for i in 0..=scan {
        let x = lo + (hi - lo) * i as f64 / scan as f64;
        ell_max = ell_max.max(log_weight(x));
    }
    if !ell_max.is_finite() {
        return Err(PosError::Numeric("log-weight is not finite on the interval"));
    }
    let num = integrate_gl(|x| f(x) * fm::exp(log_weight(x) - ell_max), lo, hi, panels, order);
    let den = integrate_gl(|x| fm::exp(log_weight(x) - ell_max), lo, hi, panels, order);
    if !(den > 0.0) || !den.is_finite() || !num.is_finite() {
        return Err(PosError::Numeric("quadrature produced a non-finite or zero normalization"));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_nodes_integrate_polynomials_exactly() {
        // order-8 rule is exact through degree 15
        let val = integrate_gl(|x| x * x * x * x, -1.0, 1.0, 1, 8);
        assert!((val - 0.4).abs() < 1e-14);
        let val = integrate_gl(|x| 3.0 * x * x, 0.0, 2.0, 4, 8);
        assert!((val - 8.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_matches_gl_on_smooth_integrand() {
        let f = |x: f64| (-x * x).exp();
        let a = integrate_gl(f, -6.0, 6.0, 32, 16);
        let b = integrate_simpson(f, -6.0, 6.0, 20_000);
        assert!((a - b).abs() < 1e-12);
        assert!((a - core::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn expectation_normalizes() {
        let v = expectation_on_interval(|x| -x * x, |_| 1.0, -5.0, 5.0, 32, 12).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }
}
