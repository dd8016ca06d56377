//! The benchmark SDE models and their analytic / quadrature oracles.
//!
//! Four equations exercise the optimizers: the Ornstein–Uhlenbeck process
//! (linear drift, exact Gaussian moments at every time), a cubic-drift and
//! an `|x|`-drift equation (steady states known by quadrature of the
//! stationary density), and the two-dimensional laser equation (steady-state
//! photon number in closed form). A constant-coefficient model backs the
//! synthetic one-step benchmarks.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamic::SdeModel;
use crate::error::{PosError, Result};
use crate::fm;
use crate::observables::ObservableSet;
use crate::quad::{expectation_on_interval, integrate_gl, integrate_simpson};
use crate::stats::{normal_moment, raw_from_central, MomentVector};

/// Ornstein–Uhlenbeck parameters: `dx = (f − g·x)dt + b·dw`, Gaussian
/// initial condition `N(init_mean, init_std²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub f: f64,
    pub g: f64,
    pub b: f64,
    pub init_mean: f64,
    pub init_std: f64,
}

impl OuParams {
    /// The benchmark configuration: `f = 1`, `g = 0.2`, `b = 0.5`,
    /// `x(0) ~ N(0.5, 0.1²)`.
    pub fn benchmark() -> Self {
        OuParams { f: 1.0, g: 0.2, b: 0.5, init_mean: 0.5, init_std: 0.1 }
    }
}

/// `dx = (f − gx)dt + b dw`.
#[derive(Debug, Clone, Copy)]
pub struct Ou(pub OuParams);

impl SdeModel for Ou {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.0.f - self.0.g * x[0];
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.0.b;
    }
    fn label(&self) -> &'static str {
        "ou"
    }
}

/// `dx = (x − x³)dt + dw`.
#[derive(Debug, Clone, Copy)]
pub struct CubicDrift;

impl SdeModel for CubicDrift {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] - x[0] * x[0] * x[0];
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn label(&self) -> &'static str {
        "cubic"
    }
}

/// `dx = x(1 − |x|)dt + dw`; the drift is evaluated exactly, kink and all.
#[derive(Debug, Clone, Copy)]
pub struct IrregularDrift;

impl SdeModel for IrregularDrift {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * (1.0 - fm::abs(x[0]));
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn label(&self) -> &'static str {
        "irregular"
    }
}

/// The laser equation `da = (1 − |a|²)a·dt + b·dW_c` with complex `a` and
/// `⟨dW_c dW_c*⟩ = 2dt`, realized as a two-dimensional real SDE: each real
/// component gets an independent real noise of variance `dt`.
#[derive(Debug, Clone, Copy)]
pub struct Laser {
    pub b: f64,
}

impl SdeModel for Laser {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let n = x[0] * x[0] + x[1] * x[1];
        out[0] = (1.0 - n) * x[0];
        out[1] = (1.0 - n) * x[1];
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.b;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = self.b;
    }
    fn label(&self) -> &'static str {
        "laser"
    }
}

/// Constant drift `a`, additive noise `b`: the synthetic one-step model.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCoeff {
    pub drift: f64,
    pub noise: f64,
}

impl SdeModel for ConstantCoeff {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.drift;
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.noise;
    }
    fn label(&self) -> &'static str {
        "synthetic"
    }
}

/// One catalog entry: the model plus its benchmark initial distribution.
pub struct CatalogEntry {
    pub model: alloc::boxed::Box<dyn SdeModel + Send + Sync>,
    pub init_mean: f64,
    pub init_std: f64,
}

/// The four benchmark models with their standard initial distributions
/// (nonlinear and laser runs start from `N(0, 1/2)` per component; the
/// laser entry uses `b = 1`).
pub fn model_catalog() -> Vec<CatalogEntry> {
    let p = OuParams::benchmark();
    let root_half = fm::sqrt(0.5);
    vec![
        CatalogEntry {
            model: alloc::boxed::Box::new(Ou(p)),
            init_mean: p.init_mean,
            init_std: p.init_std,
        },
        CatalogEntry {
            model: alloc::boxed::Box::new(CubicDrift),
            init_mean: 0.0,
            init_std: root_half,
        },
        CatalogEntry {
            model: alloc::boxed::Box::new(IrregularDrift),
            init_mean: 0.0,
            init_std: root_half,
        },
        CatalogEntry { model: alloc::boxed::Box::new(Laser { b: 1.0 }), init_mean: 0.0, init_std: root_half },
    ]
}

/// Exact raw moments and cumulants of the Ornstein–Uhlenbeck solution at
/// time `t` for a Gaussian initial condition. The distribution stays
/// Gaussian: mean and variance relax exponentially, central moments are
/// `(m−1)!!·var^{m/2}` for even `m` and zero for odd, raw moments follow by
/// the binomial recursion, and all cumulants beyond the second vanish.
pub fn ou_exact_moments(p: &OuParams, t: f64, order: usize) -> Result<(MomentVector, Vec<f64>)> {
    if order == 0 {
        return Err(PosError::InvalidInput("moment order must be >= 1"));
    }
    if !(p.g > 0.0) {
        return Err(PosError::InvalidInput("ou moments require g > 0"));
    }
    if t < 0.0 {
        return Err(PosError::InvalidInput("time must be non-negative"));
    }
    let decay = fm::exp(-p.g * t);
    let mean = p.f / p.g * (-fm::expm1(-p.g * t)) + decay * p.init_mean;
    let var = fm::exp(-2.0 * p.g * t) * p.init_std * p.init_std
        + p.b * p.b / (2.0 * p.g) * (-fm::expm1(-2.0 * p.g * t));
    let mut central = vec![0.0; order];
    for m in (2..=order).step_by(2) {
        // Gaussian central moments (m−1)!!·var^{m/2}
        central[m - 1] = normal_moment(m, fm::sqrt(var)).unwrap_or(0.0);
    }
    let raw = raw_from_central(mean, &MomentVector::new(central));
    let mut cumulants = vec![0.0; order];
    cumulants[0] = mean;
    if order >= 2 {
        cumulants[1] = var;
    }
    Ok((raw, cumulants))
}

/// An unnormalized stationary density `e^{ℓ(x)}` on `[-L, L]`, with the
/// quadrature resolution to integrate against it.
pub struct SteadyStateWeight<L: Fn(f64) -> f64> {
    pub log_weight: L,
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
}

/// Stationary weight of the cubic-drift equation: `exp(x² − x⁴/2)`.
/// `L = 6` leaves a relative tail below 1e-30.
pub fn cubic_weight() -> SteadyStateWeight<impl Fn(f64) -> f64> {
    SteadyStateWeight {
        log_weight: |x: f64| x * x - 0.5 * x * x * x * x,
        half_width: 6.0,
        panels: 64,
        order: 16,
    }
}

/// Stationary weight of the irregular-drift equation:
/// `exp(x² − (2/3)|x|³)`. `L = 8`.
pub fn irregular_weight() -> SteadyStateWeight<impl Fn(f64) -> f64> {
    SteadyStateWeight {
        log_weight: |x: f64| x * x - (2.0 / 3.0) * fm::abs(x) * x * x,
        half_width: 8.0,
        panels: 64,
        order: 16,
    }
}

/// Which composite rule evaluates the steady-state quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadRule {
    GaussLegendre,
    Simpson,
}

/// Steady-state expectation `⟨f⟩ = ∫f·e^ℓ / ∫e^ℓ` over `[-L, L]`.
///
/// The weight must be integrable in practice: its boundary value relative
/// to the maximum must be below 1e-25, otherwise the tail test fails. The
/// panel count is forced even so a panel boundary sits at `x = 0`, keeping
/// every panel smooth for weights and observables with a kink there.
pub fn steady_state_expectation<L, F>(w: &SteadyStateWeight<L>, f: F) -> Result<f64>
where
    L: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    steady_state_expectation_rule(w, f, QuadRule::GaussLegendre)
}

/// [`steady_state_expectation`] with an explicit rule; the Simpson variant
/// exists as an independent cross-check.
pub fn steady_state_expectation_rule<L, F>(
    w: &SteadyStateWeight<L>,
    f: F,
    rule: QuadRule,
) -> Result<f64>
where
    L: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    let lo = -w.half_width;
    let hi = w.half_width;
    if !(hi > 0.0) || w.panels == 0 || w.order == 0 {
        return Err(PosError::InvalidInput("bad steady-state weight resolution"));
    }
    let panels = if w.panels % 2 == 0 { w.panels } else { w.panels + 1 };
    // tail test: the weight must have decayed to nothing at the boundary
    let mut ell_max = f64::NEG_INFINITY;
    let scan = 8 * panels;
    for i in 0..=scan {
        let x = lo + (hi - lo) * i as f64 / scan as f64;
        ell_max = ell_max.max((w.log_weight)(x));
    }
    let tail = ((w.log_weight)(lo)).max((w.log_weight)(hi));
    if !(tail - ell_max < -25.0 * core::f64::consts::LN_10) {
        return Err(PosError::Numeric("steady-state weight fails the tail test"));
    }
    match rule {
        QuadRule::GaussLegendre => {
            expectation_on_interval(&w.log_weight, f, lo, hi, panels, w.order)
        }
        QuadRule::Simpson => {
            let intervals = (panels * w.order * 8).max(2);
            let num =
                integrate_simpson(|x| f(x) * fm::exp((w.log_weight)(x) - ell_max), lo, hi, intervals);
            let den =
                integrate_simpson(|x| fm::exp((w.log_weight)(x) - ell_max), lo, hi, intervals);
            if !(den > 0.0) || !num.is_finite() {
                return Err(PosError::Numeric("quadrature produced a non-finite result"));
            }
            Ok(num / den)
        }
    }
}

/// Steady-state photon number of the laser equation:
/// `n_ss = 1 + √(2/π)·b / (exp(1/(2b²))·[1 + erf(1/(√2·b))])`.
pub fn laser_nss(b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(PosError::InvalidInput("laser_nss requires b > 0"));
    }
    let inv = 1.0 / (2.0 * b * b);
    let denom = fm::exp(inv) * (1.0 + fm::erf(1.0 / (fm::sqrt(2.0) * b)));
    // exp overflows to +inf for tiny b; the correction then vanishes, which
    // is the correct limit
    let correction = fm::sqrt(2.0 / core::f64::consts::PI) * b / denom;
    Ok(1.0 + if correction.is_finite() { correction } else { 0.0 })
}

/// Independent oracle for [`laser_nss`]: the radial stationary density of
/// the photon number `u = |a|²` is `∝ e^{(u − u²/2)/b²}` on `u ≥ 0`, so
/// `n_ss = ⟨u⟩` by quadrature over an interval covering the Gaussian peak
/// at `u = 1` (width `b`).
pub fn laser_nss_quadrature(b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(PosError::InvalidInput("laser_nss requires b > 0"));
    }
    let b2 = b * b;
    let lo = (1.0 - 14.0 * b).max(0.0);
    let hi = 1.0 + 14.0 * b + 4.0 * b2;
    let log_w = |u: f64| (u - 0.5 * u * u) / b2;
    let num = |u: f64| u;
    expectation_on_interval(log_w, num, lo, hi, 128, 16)
}

/// All 18 constrained observables of the laser benchmark: every cross
/// moment `Re{a}^n Im{a}^m` with `1 ≤ n+m ≤ 4` (14 of them) plus the four
/// fifth-order cross terms `(4,1), (3,2), (2,3), (1,4)`. Targets are the
/// moments of the initial distribution `N(0, σ²)` per component.
pub fn laser_observables(init_sigma: f64) -> Result<ObservableSet> {
    let pairs = laser_pairs();
    let mom = |k: u32| -> Result<f64> {
        if k == 0 {
            Ok(1.0)
        } else {
            normal_moment(k as usize, init_sigma)
        }
    };
    let mut targets = Vec::with_capacity(pairs.len());
    for &(n, m) in &pairs {
        targets.push(mom(n)? * mom(m)?);
    }
    ObservableSet::monomial_2d(pairs, targets)
}

/// The exponent pairs of [`laser_observables`], in deterministic order
/// (total order ascending, then first exponent descending).
pub fn laser_pairs() -> Vec<(u32, u32)> {
    let mut pairs = Vec::with_capacity(18);
    for total in 1..=4u32 {
        for n in (0..=total).rev() {
            pairs.push((n, total - n));
        }
    }
    pairs.extend_from_slice(&[(4, 1), (3, 2), (2, 3), (1, 4)]);
    pairs
}

/// Convenience: `∫` of a plain function against the cubic or irregular
/// weight via both rules, for oracle cross-checks.
pub fn weight_normalization<L: Fn(f64) -> f64>(w: &SteadyStateWeight<L>) -> f64 {
    integrate_gl(|x| fm::exp((w.log_weight)(x)), -w.half_width, w.half_width, w.panels, w.order)
}
