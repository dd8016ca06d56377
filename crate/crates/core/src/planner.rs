//! Resource planning: how to split a fixed budget `N = N_S·N_T` between
//! samples and time steps.
//!
//! For an integrator of weak order `p` with truncation constant `c` and
//! sampling deviation `σ`, the total error `ε = c·N_T^{−p} + σ·N_S^{−1/2}`
//! is minimized at
//! `N_S = N^{2p/(2p+1)}·[σ/(2pc)]^{2/(2p+1)}`, where the two error parts
//! sit in the fixed ratio `ε_T/ε_S = 1/(2p)` and the best achievable
//! scaling is `ε ∝ N^{−p/(2p+1)}`.

use crate::error::{PosError, Result};
use crate::fm;

/// An optimal sample/step split with its predicted error.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourcePlan {
    pub order_p: f64,
    pub trunc_const: f64,
    pub sample_sigma: f64,
    pub budget: u64,
    pub n_samples: u64,
    pub n_steps: u64,
    /// Total error of the continuous optimum.
    pub predicted_error: f64,
    /// `ε_T/ε_S` at the optimum, exactly `1/(2p)` before rounding.
    pub error_ratio: f64,
}

/// Total error of the continuous model for a candidate integer split
/// (`n_steps` implied as `budget/n_samples` is NOT assumed; both are taken
/// as given).
pub fn predicted_total_error(p: f64, c: f64, sigma: f64, n_steps: f64, n_samples: f64) -> f64 {
    c * fm::powf(n_steps, -p) + sigma / fm::sqrt(n_samples)
}

/// Splits the budget `n` into `(N_S, N_T)` minimizing the error model.
/// The continuous optimum is rounded to the integer lattice neighbor with
/// the smallest model error subject to `N_S·N_T ≤ n`.
pub fn optimal_split(p: f64, c: f64, sigma: f64, n: u64) -> Result<ResourcePlan> {
    if !(p > 0.0) || !(c > 0.0) || !(sigma > 0.0) || n == 0 {
        return Err(PosError::InvalidInput("optimal_split requires p, c, sigma, n > 0"));
    }
    let nf = n as f64;
    let expo = 2.0 / (2.0 * p + 1.0);
    let factor = fm::powf(sigma / (2.0 * p * c), expo);
    let ns_star = fm::powf(nf, 2.0 * p / (2.0 * p + 1.0)) * factor;
    let nt_star = nf / ns_star;

    // the corners of the lattice cell around the continuous optimum,
    // subject to the budget
    let mut best: Option<(u64, u64, f64)> = None;
    for ns in [fm::floor(ns_star), fm::floor(ns_star) + 1.0] {
        for nt in [fm::floor(nt_star), fm::floor(nt_star) + 1.0] {
            let ns_i = (ns.max(1.0).min(nf)) as u64;
            let nt_i = (nt.max(1.0).min(nf)) as u64;
            if ns_i.saturating_mul(nt_i) > n {
                continue;
            }
            let err = predicted_total_error(p, c, sigma, nt_i as f64, ns_i as f64);
            if best.map_or(true, |(_, _, e)| err < e) {
                best = Some((ns_i, nt_i, err));
            }
        }
    }
    let (n_samples, n_steps, _) = best.expect("floor corner is always within budget");

    let predicted_error = fm::powf(
        c * fm::powf(sigma, 2.0 * p) / (2.0 * p * fm::powf(nf, p)),
        1.0 / (2.0 * p + 1.0),
    ) * (1.0 + 1.0 / (2.0 * p));

    Ok(ResourcePlan {
        order_p: p,
        trunc_const: c,
        sample_sigma: sigma,
        budget: n,
        n_samples,
        n_steps,
        predicted_error,
        error_ratio: 1.0 / (2.0 * p),
    })
}

/// Best achievable total-error scaling exponent for independent sampling:
/// `p_eff = p/(2p+1)`; bounded by 1/2 however high the order.
pub fn effective_order(p: f64) -> f64 {
    p / (2.0 * p + 1.0)
}
