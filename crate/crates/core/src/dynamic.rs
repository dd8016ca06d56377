//! Stepping engines: reference Euler–Maruyama, the combined and individual
//! per-step optimizers, and the multi-step integrator.
//!
//! Both optimized methods assume the ensemble enters the step with its
//! observables already on target (the initial ensemble is statically
//! optimized, every accepted step restores the property):
//!
//! - the *combined* method takes the Euler proposal and moves it so the
//!   post-step observables equal the Itō-generator targets `c`, mixing all
//!   orders of `dt` into one moment-matching solve;
//! - the *individual* method optimizes the effective noise `ΔV = BΔW`
//!   itself so the `√dt` (mean) and `dt` (variance) error terms vanish
//!   separately, via the doubly extended system stacking `J` and the
//!   Hessian contraction `H·ΔV`.

use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble::Ensemble;
use crate::error::{PosError, Result};
use crate::fm;
use crate::linsolve::{solve_gram_equilibrated, svd_pinv_apply, DenseMatrix, GramMatrix};
use crate::noise::{blocks, NoiseStream};
use crate::observables::{ObservableKind, ObservableSet};
use crate::report::AttemptReport;
use crate::static_pos::{match_targets, OptimizerConfig};
use crate::stats::{chunked_sums, pairwise_dot, raw_moments};

/// A stochastic differential equation `dx = a(x)dt + b(x)dw` with
/// `⟨dw_i dw_j⟩ = δ_ij dt`.
pub trait SdeModel {
    /// State dimension `d`.
    fn dim(&self) -> usize;
    /// Number of independent noises `q`.
    fn noise_dim(&self) -> usize;
    /// Drift `a(x)`, written into `out[..dim]`.
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Diffusion matrix `b(x)`, row-major `dim×noise_dim`, written into
    /// `out`.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn label(&self) -> &'static str;
}

/// Everything one Euler–Maruyama step needs, evaluated per sample on the
/// extended space: drift `A`, diffusion blocks `B`, raw noises `ΔW`, the
/// effective noise `ΔV = BΔW` and the diffusion matrix `d = bbᵀ`.
#[derive(Debug, Clone)]
pub struct StepProposal {
    /// `A`: per-sample drift, length `N_S·d`.
    pub drift_ext: Vec<f64>,
    /// Per-sample diffusion matrices `b(x⁽ⁿ⁾)`, length `N_S·d·q`.
    pub noise_matrix_ext: Vec<f64>,
    /// `ΔW`: raw Brownian increments, length `N_S·q`.
    pub raw_noise: Vec<f64>,
    /// `ΔV = B·ΔW`, length `N_S·d`.
    pub effective_noise: Vec<f64>,
    /// Per-sample `d = bbᵀ`, row-major `d×d` blocks, length `N_S·d·d`.
    pub diffusion: Vec<f64>,
    pub dt: f64,
}

impl StepProposal {
    /// Evaluates drift and diffusion at every sample. `dw` must hold the
    /// `N_S·q` Brownian increments (variance `dt` each).
    pub fn build(x: &Ensemble, model: &dyn SdeModel, dt: f64, dw: &[f64]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(PosError::InvalidInput("dt must be positive"));
        }
        let d = model.dim();
        let q = model.noise_dim();
        if x.dim() != d {
            return Err(PosError::InvalidInput("ensemble dimension does not match the model"));
        }
        if dw.len() != x.n_samples() * q {
            return Err(PosError::InvalidInput("noise length must equal n_samples * noise_dim"));
        }
        let n = x.n_samples();
        let mut drift_ext = vec![0.0; n * d];
        let mut bmat = vec![0.0; n * d * q];
        let mut effective = vec![0.0; n * d];
        let mut diffusion = vec![0.0; n * d * d];
        for s in 0..n {
            let xs = x.sample(s);
            let a = &mut drift_ext[s * d..(s + 1) * d];
            model.drift(xs, a);
            if let Some(k) = a.iter().position(|v| !v.is_finite()) {
                return Err(PosError::NonFinite { context: "drift", index: s * d + k });
            }
            let b = &mut bmat[s * d * q..(s + 1) * d * q];
            model.diffusion(xs, b);
            if let Some(k) = b.iter().position(|v| !v.is_finite()) {
                return Err(PosError::NonFinite { context: "diffusion", index: s * d * q + k });
            }
            let w = &dw[s * q..(s + 1) * q];
            let dv = &mut effective[s * d..(s + 1) * d];
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..q {
                    acc += b[i * q + j] * w[j];
                }
                dv[i] = acc;
            }
            let dm = &mut diffusion[s * d * d..(s + 1) * d * d];
            for i in 0..d {
                for k in 0..d {
                    let mut acc = 0.0;
                    for j in 0..q {
                        acc += b[i * q + j] * b[k * q + j];
                    }
                    dm[i * d + k] = acc;
                }
            }
        }
        Ok(StepProposal {
            drift_ext,
            noise_matrix_ext: bmat,
            raw_noise: dw.to_vec(),
            effective_noise: effective,
            diffusion,
            dt,
        })
    }

    /// The Euler–Maruyama update `x + A·dt + ΔV`.
    pub fn apply(&self, x: &Ensemble) -> Result<Ensemble> {
        let data = x
            .as_slice()
            .iter()
            .zip(self.drift_ext.iter())
            .zip(self.effective_noise.iter())
            .map(|((xi, a), dv)| xi + a * self.dt + dv)
            .collect();
        Ensemble::new(data, x.n_samples(), x.dim())
    }

    /// Fails with [`PosError::InvalidDiffusion`] if any diagonal entry of
    /// `bbᵀ` is negative (cannot happen for real `b`, but guards imported
    /// proposals).
    pub fn check_diffusion_diag(&self, dim: usize) -> Result<()> {
        for (s, block) in self.diffusion.chunks_exact(dim * dim).enumerate() {
            for i in 0..dim {
                if block[i * dim + i] < 0.0 {
                    return Err(PosError::InvalidDiffusion { index: s * dim + i });
                }
            }
        }
        Ok(())
    }
}

/// One reference Euler–Maruyama step `x ← x + a(x)dt + b(x)Δw`.
pub fn euler_step(x: &Ensemble, model: &dyn SdeModel, dt: f64, dw: &[f64]) -> Result<Ensemble> {
    StepProposal::build(x, model, dt, dw)?.apply(x)
}

/// The ideal post-step observables for an infinite ensemble, to first order
/// in `dt`: `c_m = ō_m(X) + ⟨∇o_m·a + ½ H(o_m):bbᵀ⟩_{N_S}·dt` (the Itō
/// generator applied and ensemble-averaged).
pub fn ideal_moment_changes(
    x: &Ensemble,
    model: &dyn SdeModel,
    obs: &ObservableSet,
    dt: f64,
) -> Result<Vec<f64>> {
    if dt < 0.0 {
        return Err(PosError::InvalidInput("dt must be non-negative"));
    }
    let d = model.dim();
    let q = model.noise_dim();
    let n = x.n_samples();
    let mut drift_ext = vec![0.0; n * d];
    let mut diffusion = vec![0.0; n * d * d];
    let mut b = vec![0.0; d * q];
    for s in 0..n {
        let xs = x.sample(s);
        model.drift(xs, &mut drift_ext[s * d..(s + 1) * d]);
        model.diffusion(xs, &mut b);
        let dm = &mut diffusion[s * d * d..(s + 1) * d * d];
        for i in 0..d {
            for k in 0..d {
                let mut acc = 0.0;
                for j in 0..q {
                    acc += b[i * q + j] * b[k * q + j];
                }
                dm[i * d + k] = acc;
            }
        }
    }
    obs.ideal_changes(x, &drift_ext, &diffusion, dt)
}

fn distance_or_zero(num_vec: &[f64], ref_vec: &[f64]) -> f64 {
    let num = fm::sqrt(pairwise_dot(num_vec, num_vec));
    let den = fm::sqrt(pairwise_dot(ref_vec, ref_vec));
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Combined POS step: starting from the Euler proposal, the post-step
/// ensemble is moved so `ō(X(t+dt)) = c`. On success the report carries the
/// per-observable errors `|ō − c|` normalized by `√(dt/N_S)` and the
/// relative distance `D = ‖X_opt − X_euler‖ / ‖X_euler − X‖`.
pub fn combined_step(
    x: &Ensemble,
    model: &dyn SdeModel,
    obs: &ObservableSet,
    dt: f64,
    dw: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(Ensemble, AttemptReport)> {
    let proposal = StepProposal::build(x, model, dt, dw)?;
    let targets = obs.ideal_changes(x, &proposal.drift_ext, &proposal.diffusion, dt)?;
    let x_euler = proposal.apply(x)?;
    let (x_opt, iterations) = match_targets(x_euler.clone(), obs, &targets, cfg)?;

    let delta_opt: Vec<f64> =
        x_opt.as_slice().iter().zip(x_euler.as_slice()).map(|(a, b)| a - b).collect();
    let delta_euler: Vec<f64> =
        x_euler.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a - b).collect();
    let mut report =
        AttemptReport::new(iterations, distance_or_zero(&delta_opt, &delta_euler), true);

    let norm = fm::sqrt(dt / x.n_samples() as f64);
    let sampled = obs.sampled(&x_opt)?;
    report.normalized_errors =
        sampled.iter().zip(targets.iter()).map(|(o, c)| fm::abs(o - c) / norm).collect();
    Ok((x_opt, report))
}

/// Individual POS step: the effective noise `ΔV` is optimized so the mean
/// condition `e⁽¹⁾ = JΔV = 0` and the variance condition
/// `e⁽²⁾ = ½H:[ΔVΔVᵀ − D·dt] = 0` hold separately. Returns
/// `X + A·dt + ΔV_opt`; the report carries `(|e⁽¹⁾_m| + |e⁽²⁾_m|)/√(dt/N_S)`
/// and `D = ‖ΔV_opt − ΔV‖/‖ΔV‖`.
pub fn individual_step(
    x: &Ensemble,
    model: &dyn SdeModel,
    obs: &ObservableSet,
    dt: f64,
    dw: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(Ensemble, AttemptReport)> {
    let proposal = StepProposal::build(x, model, dt, dw)?;
    proposal.check_diffusion_diag(x.dim())?;
    let dv0 = proposal.effective_noise.clone();

    let (dv_opt, iterations, e1, e2) = match obs.kind() {
        ObservableKind::Monomial1 { .. } if x.dim() == 1 => {
            optimize_noise_monomial1(x, obs, &proposal, cfg)?
        }
        _ => optimize_noise_generic(x, obs, &proposal, cfg)?,
    };

    let mut data = x.as_slice().to_vec();
    for ((xi, a), dv) in data.iter_mut().zip(proposal.drift_ext.iter()).zip(dv_opt.iter()) {
        *xi += a * proposal.dt + dv;
    }
    let x_out = Ensemble::new(data, x.n_samples(), x.dim())?;

    let diff: Vec<f64> = dv_opt.iter().zip(dv0.iter()).map(|(a, b)| a - b).collect();
    let mut report = AttemptReport::new(iterations, distance_or_zero(&diff, &dv0), true);
    let norm = fm::sqrt(dt / x.n_samples() as f64);
    report.normalized_errors =
        e1.iter().zip(e2.iter()).map(|(a, b)| (fm::abs(*a) + fm::abs(*b)) / norm).collect();
    Ok((x_out, report))
}

/// Residuals of the two individual-method conditions at the current noise:
/// `e⁽¹⁾ = JΔV` and `e⁽²⁾ = ½H:(ΔVΔVᵀ − D·dt)` (all observables; entries
/// with identically zero Hessians simply read 0).
pub fn individual_residuals(
    x: &Ensemble,
    obs: &ObservableSet,
    dv: &[f64],
    diffusion: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.dim();
    if dv.len() != x.len_ext() || diffusion.len() != x.n_samples() * d * d {
        return Err(PosError::InvalidInput("noise/diffusion shape mismatch"));
    }
    let mm = obs.arity();
    let data = x.as_slice();
    let n = x.n_samples() as f64;
    let mut grad = [0.0f64; 2];
    let mut hess = [0.0f64; 3];
    let sums = chunked_sums(x.n_samples(), 2 * mm, |s, acc| {
        let xs = &data[s * d..(s + 1) * d];
        let v = &dv[s * d..(s + 1) * d];
        let dm = &diffusion[s * d * d..(s + 1) * d * d];
        for i in 0..mm {
            obs.gradient(i, xs, &mut grad[..d]);
            let mut g = 0.0;
            for k in 0..d {
                g += grad[k] * v[k];
            }
            acc[i] += g;
            if !obs.hessian_is_zero(i) {
                obs.hessian(i, xs, &mut hess[..if d == 1 { 1 } else { 3 }]);
                let h = if d == 1 {
                    hess[0] * (v[0] * v[0] - dm[0] * dt)
                } else {
                    hess[0] * (v[0] * v[0] - dm[0] * dt)
                        + 2.0 * hess[1] * (v[0] * v[1] - dm[1] * dt)
                        + hess[2] * (v[1] * v[1] - dm[3] * dt)
                };
                acc[mm + i] += 0.5 * h;
            }
        }
    });
    let e1 = sums[..mm].iter().map(|s| s / n).collect();
    let e2 = sums[mm..].iter().map(|s| s / n).collect();
    Ok((e1, e2))
}

/// Fast path for 1-d monomials: every block of the doubly extended system
/// is a weighted power sum, so no extended matrix is ever materialized.
fn optimize_noise_monomial1(
    x: &Ensemble,
    obs: &ObservableSet,
    proposal: &StepProposal,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, usize, Vec<f64>, Vec<f64>)> {
    let mm = obs.arity();
    let n = x.n_samples();
    let nf = n as f64;
    let dt = proposal.dt;
    let data = x.as_slice();
    let mut dv = proposal.effective_noise.clone();
    // kept variance rows: monomials of power >= 2
    let kept: Vec<usize> = (0..mm).filter(|&i| !obs.hessian_is_zero(i)).collect();
    let k2 = kept.len();
    // center the condition rows on the sample mean (exact recombination of
    // the conditions; keeps the doubly extended gram conditioned)
    let obs_raw = obs;
    let mean = crate::stats::pairwise_sum(data) / nf;
    let (obs, _) = obs.centered_about(mean, obs.targets());
    let obs = &obs;
    let shift = obs.shift_of();
    let scale = |i: usize| obs.scale_of(i);

    // power sums of X alone (fixed during the iteration)
    let s0_len = (2 * mm).max(3) - 1; // S0_k, k <= 2M-2
    let sd_len = if mm >= 2 { mm - 1 } else { 0 }; // Σ x^k D_n, k <= M-2
    let dmat = &proposal.diffusion;
    let fixed = chunked_sums(n, s0_len + sd_len, |i, acc| {
        let xi = data[i] - shift;
        let mut p = 1.0;
        for a in acc[..s0_len].iter_mut() {
            *a += p;
            p *= xi;
        }
        let di = dmat[i];
        let mut p = di;
        for a in acc[s0_len..].iter_mut() {
            *a += p;
            p *= xi;
        }
    });
    let s0 = &fixed[..s0_len];
    let sd = &fixed[s0_len..];

    let s1_len = if mm >= 2 { 2 * mm - 2 } else { 1 }; // Σ x^k ΔV, k <= 2M-3
    let s2_len = if mm >= 2 { (2 * mm).max(4) - 3 } else { 0 }; // Σ x^k ΔV², k <= 2M-4

    // residuals of the centered conditions at a given noise vector
    let eval = |dv: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let moving = chunked_sums(n, s1_len + s2_len, |i, acc| {
            let xi = data[i] - shift;
            let v = dv[i];
            let v2 = v * v;
            let mut p = 1.0;
            for k in 0..s1_len {
                acc[k] += p * v;
                if k < s2_len {
                    acc[s1_len + k] += p * v2;
                }
                p *= xi;
            }
        });
        let e1: Vec<f64> =
            (0..mm).map(|i| scale(i) * (i + 1) as f64 * moving[i] / nf).collect();
        let e2: Vec<f64> = kept
            .iter()
            .map(|&i| {
                let m = (i + 1) as f64;
                scale(i) * m * (m - 1.0) / (2.0 * nf)
                    * (moving[s1_len + i - 1] - dt * sd[i - 1])
            })
            .collect();
        let residual = fm::sqrt(pairwise_dot(&e1, &e1) + pairwise_dot(&e2, &e2));
        (moving, e1, e2, residual)
    };

    let mut prev_residual = f64::INFINITY;
    let mut best_residual = f64::INFINITY;
    let mut growth_streak = 0usize;
    let mut small_streak = 0usize;
    let mut delta = vec![0.0; n];
    let (mut sums, mut e1, mut e2, mut residual) = eval(&dv);
    for iter in 1..=cfg.i_max {
        #[cfg(feature = "std")]
        if std::env::var("POS_TRACE").is_ok() {
            std::eprintln!("    it {iter}: |r|={residual:.3e}");
        }
        if residual == 0.0 {
            let (e1f, e2f) = final_residuals_raw(x, obs_raw, &dv, dmat, dt, &kept);
            return Ok((dv, iter - 1, e1f, e2f));
        }
        // transient overshoot is part of healthy Newton behavior here;
        // declare divergence only when the residual keeps growing AND has
        // left the neighborhood of the best value seen
        if residual > prev_residual {
            growth_streak += 1;
            if growth_streak >= 2 && residual > 100.0 * best_residual {
                return Err(PosError::Divergence { iteration: iter });
            }
        } else {
            growth_streak = 0;
        }
        prev_residual = residual;
        best_residual = best_residual.min(residual);

        // doubly extended gram: [J;G][J;G]ᵀ from the power sums
        let s1 = &sums[..s1_len];
        let s2 = &sums[s1_len..];
        let kk = mm + k2;
        let mut u = DenseMatrix::zeros(kk, kk);
        for a in 0..mm {
            let ca = scale(a) * (a + 1) as f64;
            for b in a..mm {
                let v = ca * scale(b) * (b + 1) as f64 * s0[a + b] / (nf * nf);
                u.set(a, b, v);
                u.set(b, a, v);
            }
        }
        for (jj, &j) in kept.iter().enumerate() {
            let mj = (j + 1) as f64;
            let cj = scale(j) * mj * (mj - 1.0);
            for a in 0..mm {
                let ca = scale(a) * (a + 1) as f64;
                let v = ca * cj * s1[a + j - 1] / (nf * nf);
                u.set(a, mm + jj, v);
                u.set(mm + jj, a, v);
            }
            for (ii, &i) in kept.iter().enumerate().skip(jj) {
                let mi = (i + 1) as f64;
                let ci = scale(i) * mi * (mi - 1.0);
                let v = cj * ci * s2[i + j - 2] / (nf * nf);
                u.set(mm + jj, mm + ii, v);
                u.set(mm + ii, mm + jj, v);
            }
        }
        let gram = GramMatrix::from_symmetric(u).expect("square");
        let mut rhs = Vec::with_capacity(kk);
        rhs.extend(e1.iter().map(|v| -v));
        rhs.extend(e2.iter().map(|v| -v));
        match solve_gram_equilibrated(&gram, &rhs) {
            Ok(y) => {
                // δ_n = P(x_n) + Q(x_n)·ΔV_n with coefficients from y
                let pc: Vec<f64> =
                    (0..mm).map(|i| scale(i) * (i + 1) as f64 * y[i] / nf).collect();
                let mut qc = vec![0.0f64; if mm >= 2 { mm - 1 } else { 0 }];
                for (jj, &j) in kept.iter().enumerate() {
                    let mj = (j + 1) as f64;
                    qc[j - 1] = scale(j) * mj * (mj - 1.0) * y[mm + jj] / nf;
                }
                for i in 0..n {
                    let xi = data[i] - shift;
                    let mut p = pc[mm - 1];
                    for k in (0..mm - 1).rev() {
                        p = p * xi + pc[k];
                    }
                    let mut q = 0.0;
                    if !qc.is_empty() {
                        q = qc[qc.len() - 1];
                        for k in (0..qc.len() - 1).rev() {
                            q = q * xi + qc[k];
                        }
                    }
                    delta[i] = p + q * dv[i];
                }
            }
            Err(PosError::SingularGram { .. }) if cfg.svd_fallback => {
                let jt = build_jtilde_dense(x, obs, &dv, &kept)?;
                delta = svd_pinv_apply(&jt, &rhs, cfg.svd_cutoff)?;
            }
            Err(e) => return Err(e),
        }

        // back-track the update when the full step grows the residual: the
        // variance condition is quadratic and an undamped update can cycle
        let dv_norm = fm::sqrt(pairwise_dot(&dv, &dv)).max(f64::MIN_POSITIVE);
        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> =
                dv.iter().zip(delta.iter()).map(|(v, d)| v + alpha * d).collect();
            let out = eval(&trial);
            if out.3 < residual || alpha <= 1.0 / 16.0 {
                break (trial, out);
            }
            alpha *= 0.5;
        };
        dv = accepted.0;
        (sums, e1, e2, residual) = accepted.1;
        if dv.iter().any(|v| !v.is_finite()) {
            return Err(PosError::NonFinite { context: "optimized noise", index: 0 });
        }
        let step = alpha * fm::sqrt(pairwise_dot(&delta, &delta));
        if step / dv_norm < cfg.eta {
            small_streak += 1;
            if small_streak >= 2 {
                let (e1f, e2f) = final_residuals_raw(x, obs_raw, &dv, dmat, dt, &kept);
                return Ok((dv, iter, e1f, e2f));
            }
        } else {
            small_streak = 0;
        }
    }
    Err(PosError::NonConvergence { iterations: cfg.i_max })
}

/// Residuals of the raw (uncentered) conditions at the converged noise,
/// for reporting.
fn final_residuals_raw(
    x: &Ensemble,
    obs: &ObservableSet,
    dv: &[f64],
    dmat: &[f64],
    dt: f64,
    kept: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let mm = obs.arity();
    let n = x.n_samples();
    let nf = n as f64;
    let data = x.as_slice();
    let shift = obs.shift_of();
    let s1_len = mm;
    let s2_len = if mm >= 2 { mm - 1 } else { 0 };
    let sums = chunked_sums(n, s1_len + 2 * s2_len, |i, acc| {
        let xi = data[i] - shift;
        let v = dv[i];
        let v2 = v * v;
        let di = dmat[i];
        let mut p = 1.0;
        for k in 0..s1_len {
            acc[k] += p * v;
            if k < s2_len {
                acc[s1_len + k] += p * v2;
                acc[s1_len + s2_len + k] += p * di;
            }
            p *= xi;
        }
    });
    let e1: Vec<f64> =
        (0..mm).map(|i| obs.scale_of(i) * (i + 1) as f64 * sums[i] / nf).collect();
    let mut e2 = vec![0.0; mm];
    for &i in kept {
        let m = (i + 1) as f64;
        e2[i] = obs.scale_of(i) * m * (m - 1.0) / (2.0 * nf)
            * (sums[s1_len + i - 1] - dt * sums[s1_len + s2_len + i - 1]);
    }
    (e1, e2)
}

/// Dense doubly extended matrix `J̃ = [J; H·ΔV]` (zero-Hessian rows
/// dropped).
fn build_jtilde_dense(
    x: &Ensemble,
    obs: &ObservableSet,
    dv: &[f64],
    kept: &[usize],
) -> Result<DenseMatrix> {
    let d = x.dim();
    let mm = obs.arity();
    let ncols = x.len_ext();
    let inv_n = 1.0 / x.n_samples() as f64;
    let mut jt = DenseMatrix::zeros(mm + kept.len(), ncols);
    let mut g = [0.0f64; 2];
    let mut h = [0.0f64; 3];
    for i in 0..mm {
        for s in 0..x.n_samples() {
            obs.gradient(i, x.sample(s), &mut g[..d]);
            for k in 0..d {
                jt.set(i, s * d + k, g[k] * inv_n);
            }
        }
    }
    for (jj, &j) in kept.iter().enumerate() {
        for s in 0..x.n_samples() {
            obs.hessian(j, x.sample(s), &mut h[..if d == 1 { 1 } else { 3 }]);
            let v = &dv[s * d..(s + 1) * d];
            if d == 1 {
                jt.set(mm + jj, s, h[0] * v[0] * inv_n);
            } else {
                jt.set(mm + jj, s * d, (h[0] * v[0] + h[1] * v[1]) * inv_n);
                jt.set(mm + jj, s * d + 1, (h[1] * v[0] + h[2] * v[1]) * inv_n);
            }
        }
    }
    Ok(jt)
}

/// Generic-dimension individual optimizer; materializes the doubly
/// extended matrix. Used for 2-d observable sets.
fn optimize_noise_generic(
    x: &Ensemble,
    obs: &ObservableSet,
    proposal: &StepProposal,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, usize, Vec<f64>, Vec<f64>)> {
    let mm = obs.arity();
    let mut dv = proposal.effective_noise.clone();
    let kept: Vec<usize> = (0..mm).filter(|&i| !obs.hessian_is_zero(i)).collect();
    let norm_of = |e1: &[f64], e2: &[f64]| {
        let e2_kept: Vec<f64> = kept.iter().map(|&i| e2[i]).collect();
        fm::sqrt(pairwise_dot(e1, e1) + pairwise_dot(&e2_kept, &e2_kept))
    };
    let mut prev_residual = f64::INFINITY;
    let mut best_residual = f64::INFINITY;
    let mut growth_streak = 0usize;
    let mut small_streak = 0usize;
    let (mut e1, mut e2) = individual_residuals(x, obs, &dv, &proposal.diffusion, proposal.dt)?;
    let mut residual = norm_of(&e1, &e2);
    for iter in 1..=cfg.i_max {
        if residual == 0.0 {
            return Ok((dv, iter - 1, e1, e2));
        }
        // transient overshoot is part of healthy Newton behavior here;
        // declare divergence only when the residual keeps growing AND has
        // left the neighborhood of the best value seen
        if residual > prev_residual {
            growth_streak += 1;
            if growth_streak >= 2 && residual > 100.0 * best_residual {
                return Err(PosError::Divergence { iteration: iter });
            }
        } else {
            growth_streak = 0;
        }
        prev_residual = residual;
        best_residual = best_residual.min(residual);

        let jt = build_jtilde_dense(x, obs, &dv, &kept)?;
        let mut rhs = Vec::with_capacity(mm + kept.len());
        rhs.extend(e1.iter().map(|v| -v));
        rhs.extend(kept.iter().map(|&i| -e2[i]));
        let delta = match crate::linsolve::least_norm_solve(&jt, &rhs) {
            Ok(d) => d,
            Err(PosError::SingularGram { .. }) if cfg.svd_fallback => {
                svd_pinv_apply(&jt, &rhs, cfg.svd_cutoff)?
            }
            Err(e) => return Err(e),
        };
        // damped acceptance, as in the monomial fast path
        let dv_norm = fm::sqrt(pairwise_dot(&dv, &dv)).max(f64::MIN_POSITIVE);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> =
                dv.iter().zip(delta.iter()).map(|(v, d)| v + alpha * d).collect();
            let (t1, t2) =
                individual_residuals(x, obs, &trial, &proposal.diffusion, proposal.dt)?;
            let t_res = norm_of(&t1, &t2);
            if t_res < residual || alpha <= 1.0 / 16.0 {
                dv = trial;
                e1 = t1;
                e2 = t2;
                residual = t_res;
                break;
            }
            alpha *= 0.5;
        }
        if dv.iter().any(|v| !v.is_finite()) {
            return Err(PosError::NonFinite { context: "optimized noise", index: 0 });
        }
        let step = alpha * fm::sqrt(pairwise_dot(&delta, &delta));
        if step / dv_norm < cfg.eta {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok((dv, iter, e1, e2));
            }
        } else {
            small_streak = 0;
        }
    }
    Err(PosError::NonConvergence { iterations: cfg.i_max })
}

/// Which stepping engine the integrator drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    Euler,
    Combined,
    Individual,
}

/// What to record along the way: observable snapshots at the given step
/// counts (raw moments up to `moment_order` in one dimension, the sampled
/// observable set in higher dimensions).
#[derive(Debug, Clone)]
pub struct RecordSpec {
    pub moment_order: usize,
    pub at_steps: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IntegrationResult {
    pub snapshots: Vec<Snapshot>,
    pub final_ensemble: Ensemble,
    /// Steps that diverged once and were re-run as two bridged half steps.
    pub step_retries: usize,
}

/// Integrates `N_T` uniform steps of size `T/N_T`, recording snapshots.
///
/// Noise comes from `stream` at block `step(s)`, so runs with equal seeds
/// consume identical draws regardless of method — paired comparisons by
/// construction. For the optimized methods the initial ensemble is expected
/// to be pre-optimized. A step whose correction diverges is retried once as
/// two half steps whose noises refine the original increment by a Brownian
/// bridge (the halves sum to the recorded `ΔW`); a second failure aborts
/// with the step index.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    model: &dyn SdeModel,
    x0: &Ensemble,
    horizon: f64,
    n_steps: usize,
    method: StepMethod,
    obs: &ObservableSet,
    cfg: &OptimizerConfig,
    record: &RecordSpec,
    stream: &NoiseStream,
) -> Result<IntegrationResult> {
    if !(horizon > 0.0) || n_steps == 0 {
        return Err(PosError::InvalidInput("horizon must be positive and n_steps >= 1"));
    }
    let dt = horizon / n_steps as f64;
    let q = model.noise_dim();
    let n_noise = x0.n_samples() * q;
    let mut x = x0.clone();
    let mut snapshots = Vec::new();
    let mut retries = 0usize;
    let mut dw = vec![0.0; n_noise];
    let mut record_set: Vec<usize> = record.at_steps.clone();
    record_set.sort_unstable();
    record_set.dedup();

    for s in 0..n_steps {
        stream.normals_into(blocks::step(s), &mut dw);
        let sqrt_dt = fm::sqrt(dt);
        for v in dw.iter_mut() {
            *v *= sqrt_dt;
        }
        match advance(&x, model, obs, dt, &dw, method, cfg) {
            Ok(next) => x = next,
            Err(PosError::Divergence { .. }) => {
                // halve the step: refine the increment with a bridge draw
                let xi = stream.normals(blocks::bridge(s), n_noise);
                let half = fm::sqrt(dt) / 2.0;
                let dw1: Vec<f64> =
                    dw.iter().zip(xi.iter()).map(|(w, z)| w / 2.0 + half * z).collect();
                let dw2: Vec<f64> =
                    dw.iter().zip(xi.iter()).map(|(w, z)| w / 2.0 - half * z).collect();
                retries += 1;
                let mid = advance(&x, model, obs, dt / 2.0, &dw1, method, cfg)
                    .map_err(|_| PosError::StepFailed { step: s, cause: "diverged after retry" })?;
                x = advance(&mid, model, obs, dt / 2.0, &dw2, method, cfg)
                    .map_err(|_| PosError::StepFailed { step: s, cause: "diverged after retry" })?;
            }
            Err(PosError::NonFinite { .. }) => {
                return Err(PosError::StepFailed { step: s, cause: "non-finite state" })
            }
            Err(PosError::NonConvergence { .. }) => {
                return Err(PosError::StepFailed { step: s, cause: "iteration cap reached" })
            }
            Err(e) => return Err(e),
        }
        let done = s + 1;
        if record_set.binary_search(&done).is_ok() {
            let values = if x.dim() == 1 {
                raw_moments(&x, record.moment_order)?.into_values()
            } else {
                obs.sampled(&x)?
            };
            snapshots.push(Snapshot { step: done, time: done as f64 * dt, values });
        }
    }
    Ok(IntegrationResult { snapshots, final_ensemble: x, step_retries: retries })
}

fn advance(
    x: &Ensemble,
    model: &dyn SdeModel,
    obs: &ObservableSet,
    dt: f64,
    dw: &[f64],
    method: StepMethod,
    cfg: &OptimizerConfig,
) -> Result<Ensemble> {
    match method {
        StepMethod::Euler => euler_step(x, model, dt, dw),
        StepMethod::Combined => combined_step(x, model, obs, dt, dw, cfg).map(|(e, _)| e),
        StepMethod::Individual => individual_step(x, model, obs, dt, dw, cfg).map(|(e, _)| e),
    }
}
