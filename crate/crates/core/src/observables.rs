//! Observable sets: the functions whose sampled averages get optimized.
//!
//! Two kinds cover the benchmarks: plain monomials `x^m` for `m = 1..=M` in
//! one dimension, and explicit cross-monomials `x₁^n x₂^m` in two. Each
//! observable carries value/gradient/second-derivative evaluators plus a
//! target value.
//!
//! For monomials, every bulk quantity the optimizers need — sampled
//! averages, the Gram matrix `JJᵀ`, Itō-generator targets — is a linear
//! combination of plain power sums, so the hot paths assemble one power-sum
//! grid per iteration instead of materializing the `M×N_S·d` Jacobian.

use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble::Ensemble;
use crate::error::{PosError, Result};
use crate::linsolve::{DenseMatrix, GramMatrix};
use crate::stats::chunked_sums;

/// Which family of observables a set consists of.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    /// `o_m(x) = (x − shift)^m` for `m = 1..=order`, one-dimensional.
    ///
    /// The shift is an internal reformulation device: the span of the
    /// constraint gradients is independent of it, but the Gram conditioning
    /// is not — monomials about the sample mean stay well conditioned where
    /// raw monomials of an off-center ensemble degenerate.
    Monomial1 { order: usize, shift: f64 },
    /// `o_i(x) = x₁^{n_i} x₂^{m_i}`, two-dimensional.
    Monomial2 { pairs: Vec<(u32, u32)> },
}

/// A set of observables together with their target values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSet {
    kind: ObservableKind,
    targets: Vec<f64>,
    /// Optional per-observable scale factors `c_i` (observable `i` becomes
    /// `c_i·o_i`). The optimization is scale-invariant, so these exist for
    /// verifying exactly that.
    scales: Option<Vec<f64>>,
}

impl ObservableSet {
    /// Monomials `x, x², …, x^order` with the given targets.
    pub fn monomial_1d(order: usize, targets: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(PosError::InvalidInput("observable order must be >= 1"));
        }
        if targets.len() != order {
            return Err(PosError::InvalidInput("targets length must equal the order"));
        }
        Ok(ObservableSet {
            kind: ObservableKind::Monomial1 { order, shift: 0.0 },
            targets,
            scales: None,
        })
    }

    /// An equivalent reformulation of a one-dimensional monomial system in
    /// powers of `(x − shift)`: the target vector is mapped by the exact
    /// binomial (triangular) transform, so the constraint set — and hence
    /// the least-norm Newton step — is unchanged in exact arithmetic, while
    /// the Gram matrix stays well conditioned for ensembles centered away
    /// from zero. Returns the reformulated set and targets; pass-through
    /// for other kinds.
    pub(crate) fn centered_about(&self, center: f64, targets: &[f64]) -> (Self, Vec<f64>) {
        match &self.kind {
            ObservableKind::Monomial1 { order, shift: old } if center.is_finite() => {
                let delta = center - old;
                // de-scale, apply the binomial shift transform, re-scale
                let raw: Vec<f64> = (0..*order).map(|i| targets[i] / self.scale(i)).collect();
                let transformed =
                    crate::stats::central_from_raw(delta, &crate::stats::MomentVector::new(raw));
                let new_targets: Vec<f64> = transformed
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * self.scale(i))
                    .collect();
                let set = ObservableSet {
                    kind: ObservableKind::Monomial1 { order: *order, shift: center },
                    targets: new_targets.clone(),
                    scales: self.scales.clone(),
                };
                (set, new_targets)
            }
            _ => (self.clone(), targets.to_vec()),
        }
    }

    pub(crate) fn shift_of(&self) -> f64 {
        match &self.kind {
            ObservableKind::Monomial1 { shift, .. } => *shift,
            ObservableKind::Monomial2 { .. } => 0.0,
        }
    }

    pub(crate) fn scale_of(&self, i: usize) -> f64 {
        self.scale(i)
    }

    /// Cross-monomials with explicit exponent pairs (each with `n + m >= 1`).
    pub fn monomial_2d(pairs: Vec<(u32, u32)>, targets: Vec<f64>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(PosError::InvalidInput("at least one exponent pair required"));
        }
        if pairs.iter().any(|&(n, m)| n + m == 0) {
            return Err(PosError::InvalidInput("exponent pairs must have n + m >= 1"));
        }
        if targets.len() != pairs.len() {
            return Err(PosError::InvalidInput("targets length must equal the pair count"));
        }
        Ok(ObservableSet { kind: ObservableKind::Monomial2 { pairs }, targets, scales: None })
    }

    /// Replaces every observable `o_i` by `c_i·o_i` and its target by
    /// `c_i·μ_i`.
    pub fn rescaled(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.arity() {
            return Err(PosError::InvalidInput("scales length must equal the arity"));
        }
        if scales.iter().any(|&c| c == 0.0 || !c.is_finite()) {
            return Err(PosError::InvalidInput("scales must be finite and nonzero"));
        }
        let targets = self.targets.iter().zip(scales).map(|(t, c)| t * c).collect();
        let merged = match &self.scales {
            None => scales.to_vec(),
            Some(old) => old.iter().zip(scales).map(|(a, b)| a * b).collect(),
        };
        Ok(ObservableSet { kind: self.kind.clone(), targets, scales: Some(merged) })
    }

    #[inline]
    fn scale(&self, i: usize) -> f64 {
        match &self.scales {
            None => 1.0,
            Some(s) => s[i],
        }
    }

    /// Number of observables `M`.
    pub fn arity(&self) -> usize {
        match &self.kind {
            ObservableKind::Monomial1 { order, .. } => *order,
            ObservableKind::Monomial2 { pairs } => pairs.len(),
        }
    }

    /// Sample dimension the observables act on.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ObservableKind::Monomial1 { .. } => 1,
            ObservableKind::Monomial2 { .. } => 2,
        }
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn set_targets(&mut self, targets: Vec<f64>) -> Result<()> {
        if targets.len() != self.arity() {
            return Err(PosError::InvalidInput("targets length must equal the arity"));
        }
        self.targets = targets;
        Ok(())
    }

    /// `o_i(x)` for one sample.
    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        let c = self.scale(i);
        match &self.kind {
            ObservableKind::Monomial1 { shift, .. } => c * ipow(x[0] - shift, (i + 1) as u32),
            ObservableKind::Monomial2 { pairs } => {
                let (n, m) = pairs[i];
                c * ipow(x[0], n) * ipow(x[1], m)
            }
        }
    }

    /// Gradient `∂o_i/∂x` for one sample, written into `out[..dim]`.
    pub fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let c = self.scale(i);
        match &self.kind {
            ObservableKind::Monomial1 { shift, .. } => {
                let m = (i + 1) as u32;
                out[0] = c * m as f64 * ipow(x[0] - shift, m - 1);
            }
            ObservableKind::Monomial2 { pairs } => {
                let (n, m) = pairs[i];
                out[0] =
                    if n == 0 { 0.0 } else { c * n as f64 * ipow(x[0], n - 1) * ipow(x[1], m) };
                out[1] =
                    if m == 0 { 0.0 } else { c * m as f64 * ipow(x[0], n) * ipow(x[1], m - 1) };
            }
        }
    }

    /// Second derivatives for one sample. One-dimensional sets write
    /// `[∂²o/∂x²]`; two-dimensional sets write `[∂₁₁, ∂₁₂, ∂₂₂]`.
    pub fn hessian(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let c = self.scale(i);
        match &self.kind {
            ObservableKind::Monomial1 { shift, .. } => {
                let m = (i + 1) as u32;
                out[0] =
                    if m < 2 { 0.0 } else { c * (m * (m - 1)) as f64 * ipow(x[0] - shift, m - 2) };
            }
            ObservableKind::Monomial2 { pairs } => {
                let (n, m) = pairs[i];
                let (r, s) = (x[0], x[1]);
                out[0] =
                    if n < 2 { 0.0 } else { c * (n * (n - 1)) as f64 * ipow(r, n - 2) * ipow(s, m) };
                out[1] = if n == 0 || m == 0 {
                    0.0
                } else {
                    c * (n * m) as f64 * ipow(r, n - 1) * ipow(s, m - 1)
                };
                out[2] =
                    if m < 2 { 0.0 } else { c * (m * (m - 1)) as f64 * ipow(r, n) * ipow(s, m - 2) };
            }
        }
    }

    /// True when the second derivative of observable `i` vanishes
    /// identically (linear observables). Such rows are dropped from the
    /// doubly extended system of the individual method.
    pub fn hessian_is_zero(&self, i: usize) -> bool {
        match &self.kind {
            ObservableKind::Monomial1 { .. } => i == 0,
            ObservableKind::Monomial2 { pairs } => pairs[i].0 + pairs[i].1 <= 1,
        }
    }

    /// Sampled observables `ō(X)`.
    pub fn sampled(&self, x: &Ensemble) -> Result<Vec<f64>> {
        let grid = self.power_sum_grid(x)?;
        Ok(self.sampled_from_grid(x, &grid))
    }

    /// One pass over the ensemble collecting every power sum the assembly
    /// paths need.
    pub(crate) fn power_sum_grid(&self, x: &Ensemble) -> Result<SumGrid> {
        if x.dim() != self.dim() {
            return Err(PosError::InvalidInput("ensemble dimension does not match observables"));
        }
        let data = x.as_slice();
        match &self.kind {
            ObservableKind::Monomial1 { order, shift } => {
                // gram needs Σ t^(a+b) up to 2·order − 2 and sampling needs
                // Σ t^order, with t the (possibly shifted) coordinate
                let kmax = (2 * order).saturating_sub(2).max(*order);
                let shift = *shift;
                let sums = chunked_sums(data.len(), kmax + 1, |i, acc| {
                    let xi = data[i] - shift;
                    let mut p = 1.0;
                    for a in acc.iter_mut() {
                        *a += p;
                        p *= xi;
                    }
                });
                Ok(SumGrid::One(sums))
            }
            ObservableKind::Monomial2 { pairs } => {
                let nmax = pairs.iter().map(|p| p.0).max().unwrap() as usize;
                let mmax = pairs.iter().map(|p| p.1).max().unwrap() as usize;
                let amax = 2 * nmax;
                let bmax = 2 * mmax;
                let cols = bmax + 1;
                let k = (amax + 1) * cols;
                let mut pa = vec![0.0f64; amax + 1];
                let mut pb = vec![0.0f64; bmax + 1];
                let sums = chunked_sums(x.n_samples(), k, |i, acc| {
                    let r = data[2 * i];
                    let s = data[2 * i + 1];
                    pa[0] = 1.0;
                    for j in 1..=amax {
                        pa[j] = pa[j - 1] * r;
                    }
                    pb[0] = 1.0;
                    for j in 1..=bmax {
                        pb[j] = pb[j - 1] * s;
                    }
                    for (a, &pav) in pa.iter().enumerate() {
                        let row = &mut acc[a * cols..(a + 1) * cols];
                        for (slot, &pbv) in row.iter_mut().zip(pb.iter()) {
                            *slot += pav * pbv;
                        }
                    }
                });
                Ok(SumGrid::Two { bmax, c: sums })
            }
        }
    }

    pub(crate) fn sampled_from_grid(&self, x: &Ensemble, grid: &SumGrid) -> Vec<f64> {
        let n = x.n_samples() as f64;
        match (&self.kind, grid) {
            (ObservableKind::Monomial1 { order, .. }, SumGrid::One(s)) => {
                (1..=*order).map(|m| self.scale(m - 1) * s[m] / n).collect()
            }
            (ObservableKind::Monomial2 { pairs }, SumGrid::Two { bmax, c }) => pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| self.scale(i) * c[a as usize * (bmax + 1) + b as usize] / n)
                .collect(),
            _ => unreachable!("grid kind matches observable kind"),
        }
    }

    /// `u = JJᵀ` assembled from power sums:
    /// `u_{ij} = Σ_n ∇o_i(x_n)·∇o_j(x_n) / N_S²`.
    pub(crate) fn gram_from_grid(&self, x: &Ensemble, grid: &SumGrid) -> GramMatrix {
        let mm = self.arity();
        let n2 = (x.n_samples() as f64) * (x.n_samples() as f64);
        let mut u = DenseMatrix::zeros(mm, mm);
        match (&self.kind, grid) {
            (ObservableKind::Monomial1 { .. }, SumGrid::One(s)) => {
                for i in 0..mm {
                    for j in i..mm {
                        let v = self.scale(i)
                            * self.scale(j)
                            * ((i + 1) * (j + 1)) as f64
                            * s[i + j]
                            / n2;
                        u.set(i, j, v);
                        u.set(j, i, v);
                    }
                }
            }
            (ObservableKind::Monomial2 { pairs }, SumGrid::Two { bmax, c }) => {
                let cols = *bmax + 1;
                let get = |a: i64, b: i64| c[a as usize * cols + b as usize];
                for i in 0..mm {
                    let (n1, m1) = (pairs[i].0 as i64, pairs[i].1 as i64);
                    for j in i..mm {
                        let (n2e, m2e) = (pairs[j].0 as i64, pairs[j].1 as i64);
                        let mut v = 0.0;
                        if n1 > 0 && n2e > 0 {
                            v += (n1 * n2e) as f64 * get(n1 + n2e - 2, m1 + m2e);
                        }
                        if m1 > 0 && m2e > 0 {
                            v += (m1 * m2e) as f64 * get(n1 + n2e, m1 + m2e - 2);
                        }
                        let v = self.scale(i) * self.scale(j) * v / n2;
                        u.set(i, j, v);
                        u.set(j, i, v);
                    }
                }
            }
            _ => unreachable!("grid kind matches observable kind"),
        }
        GramMatrix::from_symmetric(u).expect("square by construction")
    }

    /// `δX = Jᵀ·y` without materializing `J`: per sample this is a fixed
    /// polynomial in the coordinates whose coefficients are built from `y`.
    pub(crate) fn apply_jt(&self, x: &Ensemble, y: &[f64], delta: &mut [f64]) {
        let n = x.n_samples() as f64;
        let data = x.as_slice();
        match &self.kind {
            ObservableKind::Monomial1 { order, shift } => {
                // P(t) = Σ_m y_m c_m m t^(m−1) / N, evaluated by Horner
                let coef: Vec<f64> =
                    (0..*order).map(|k| self.scale(k) * (k + 1) as f64 * y[k] / n).collect();
                for (d, &xv) in delta.iter_mut().zip(data.iter()) {
                    let xi = xv - shift;
                    let mut acc = coef[*order - 1];
                    for k in (0..*order - 1).rev() {
                        acc = acc * xi + coef[k];
                    }
                    *d = acc;
                }
            }
            ObservableKind::Monomial2 { pairs } => {
                let nmax = pairs.iter().map(|p| p.0).max().unwrap() as usize;
                let mmax = pairs.iter().map(|p| p.1).max().unwrap() as usize;
                // coefficient grids of ∂/∂x₁ (degree ≤ nmax−1 in x₁) and
                // ∂/∂x₂ of the polynomial Σ y_i o_i / N
                let cols_r = mmax + 1;
                let cols_s = mmax; // empty when no observable depends on x₂
                let mut gr = vec![0.0f64; nmax * cols_r];
                let mut gs = vec![0.0f64; (nmax + 1) * cols_s];
                for (i, &(nn, mm)) in pairs.iter().enumerate() {
                    let w = self.scale(i) * y[i] / n;
                    if nn > 0 {
                        gr[(nn as usize - 1) * cols_r + mm as usize] += w * nn as f64;
                    }
                    if mm > 0 {
                        gs[nn as usize * cols_s + (mm as usize - 1)] += w * mm as f64;
                    }
                }
                let mut pa = vec![0.0f64; nmax + 1];
                let mut pb = vec![0.0f64; mmax + 1];
                for (s_idx, d) in delta.chunks_exact_mut(2).enumerate() {
                    let r = data[2 * s_idx];
                    let s = data[2 * s_idx + 1];
                    pa[0] = 1.0;
                    for j in 1..=nmax {
                        pa[j] = pa[j - 1] * r;
                    }
                    pb[0] = 1.0;
                    for j in 1..=mmax {
                        pb[j] = pb[j - 1] * s;
                    }
                    let mut dr = 0.0;
                    for a in 0..nmax {
                        for b in 0..cols_r {
                            let cf = gr[a * cols_r + b];
                            if cf != 0.0 {
                                dr += cf * pa[a] * pb[b];
                            }
                        }
                    }
                    let mut ds = 0.0;
                    for a in 0..=nmax {
                        for b in 0..cols_s {
                            let cf = gs[a * cols_s + b];
                            if cf != 0.0 {
                                ds += cf * pa[a] * pb[b];
                            }
                        }
                    }
                    d[0] = dr;
                    d[1] = ds;
                }
            }
        }
    }

    /// The dense Jacobian `J_{mn} = ∂ō_m/∂X_n = ∇o_m(x_n)/N_S`, materialized
    /// explicitly. Used by tests and the SVD fallback path.
    pub fn jacobian_dense(&self, x: &Ensemble) -> Result<DenseMatrix> {
        if x.dim() != self.dim() {
            return Err(PosError::InvalidInput("ensemble dimension does not match observables"));
        }
        let mm = self.arity();
        let d = self.dim();
        let ncols = x.len_ext();
        let inv_n = 1.0 / x.n_samples() as f64;
        let mut jm = DenseMatrix::zeros(mm, ncols);
        let mut g = [0.0f64; 2];
        for i in 0..mm {
            for s in 0..x.n_samples() {
                self.gradient(i, x.sample(s), &mut g[..d]);
                for k in 0..d {
                    jm.set(i, s * d + k, g[k] * inv_n);
                }
            }
        }
        Ok(jm)
    }

    /// Itō-generator targets: the ideal post-step observables
    /// `c_i = ō_i(X) + ⟨∇o_i·a + ½ H(o_i) : d⟩_{N_S} · dt`,
    /// where `a` is the per-sample drift and `d = bbᵀ` the per-sample
    /// diffusion matrix (row-major `dim×dim` blocks).
    pub fn ideal_changes(
        &self,
        x: &Ensemble,
        drift: &[f64],
        dmat: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.dim() != d {
            return Err(PosError::InvalidInput("ensemble dimension does not match observables"));
        }
        if drift.len() != x.len_ext() || dmat.len() != x.n_samples() * d * d {
            return Err(PosError::InvalidInput("drift/diffusion shape mismatch"));
        }
        let mm = self.arity();
        let data = x.as_slice();
        let n = x.n_samples() as f64;
        let mut grad = [0.0f64; 2];
        let mut hess = [0.0f64; 3];
        let sums = chunked_sums(x.n_samples(), 2 * mm, |s, acc| {
            let xi = &data[s * d..(s + 1) * d];
            let a = &drift[s * d..(s + 1) * d];
            let dm = &dmat[s * d * d..(s + 1) * d * d];
            for i in 0..mm {
                acc[i] += self.value(i, xi);
                self.gradient(i, xi, &mut grad[..d]);
                self.hessian(i, xi, &mut hess[..if d == 1 { 1 } else { 3 }]);
                let mut gen = 0.0;
                for k in 0..d {
                    gen += grad[k] * a[k];
                }
                gen += if d == 1 {
                    0.5 * hess[0] * dm[0]
                } else {
                    0.5 * (hess[0] * dm[0] + hess[2] * dm[3]) + hess[1] * dm[1]
                };
                acc[mm + i] += gen;
            }
        });
        Ok((0..mm).map(|i| sums[i] / n + dt * sums[mm + i] / n).collect())
    }
}

/// Integer power with an exact multiplication chain.
fn ipow(x: f64, n: u32) -> f64 {
    crate::fm::powi(x, n as i32)
}

pub(crate) enum SumGrid {
    One(Vec<f64>),
    Two { bmax: usize, c: Vec<f64> },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens1(values: &[f64]) -> Ensemble {
        Ensemble::new(values.to_vec(), values.len(), 1).unwrap()
    }

    #[test]
    fn jacobian_mean_row_is_inverse_n() {
        let obs = ObservableSet::monomial_1d(1, vec![0.0]).unwrap();
        let x = ens1(&[4.0, -1.0, 2.0, 0.5]);
        let j = obs.jacobian_dense(&x).unwrap();
        assert!(j.row(0).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn jacobian_second_moment_row() {
        let obs = ObservableSet::monomial_1d(2, vec![0.0, 1.0]).unwrap();
        let x = ens1(&[2.0, 4.0]);
        let j = obs.jacobian_dense(&x).unwrap();
        assert_eq!(j.row(1), &[2.0, 4.0]);
    }

    #[test]
    fn gram_fast_path_matches_dense() {
        let obs = ObservableSet::monomial_1d(4, vec![0.0; 4]).unwrap();
        let x = ens1(&[0.3, -1.2, 0.7, 1.9, -0.4, 0.05, 2.3, -0.9]);
        let grid = obs.power_sum_grid(&x).unwrap();
        let fast = obs.gram_from_grid(&x, &grid);
        let dense = crate::linsolve::gram(&obs.jacobian_dense(&x).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let a = fast.as_matrix().get(i, j);
                let b = dense.as_matrix().get(i, j);
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-30), "({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn gram_fast_path_matches_dense_2d() {
        let pairs = vec![(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1)];
        let obs = ObservableSet::monomial_2d(pairs, vec![0.0; 6]).unwrap();
        let data = [0.3, -0.2, 1.1, 0.4, -0.6, 0.9, 0.2, -1.3, 0.8, 0.1];
        let x = Ensemble::new(data.to_vec(), 5, 2).unwrap();
        let grid = obs.power_sum_grid(&x).unwrap();
        let fast = obs.gram_from_grid(&x, &grid);
        let dense = crate::linsolve::gram(&obs.jacobian_dense(&x).unwrap());
        for i in 0..6 {
            for j in 0..6 {
                let a = fast.as_matrix().get(i, j);
                let b = dense.as_matrix().get(i, j);
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-30), "({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn apply_jt_matches_dense() {
        let obs = ObservableSet::monomial_1d(3, vec![0.0; 3]).unwrap();
        let x = ens1(&[0.5, -1.5, 2.0, 0.1, -0.7]);
        let y = [0.4, -1.1, 0.25];
        let mut fast = vec![0.0; 5];
        obs.apply_jt(&x, &y, &mut fast);
        let j = obs.jacobian_dense(&x).unwrap();
        let mut dense = vec![0.0; 5];
        crate::linsolve::apply_jt(&j, &y, &mut dense);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn apply_jt_matches_dense_2d() {
        let pairs = vec![(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 1)];
        let obs = ObservableSet::monomial_2d(pairs, vec![0.0; 6]).unwrap();
        let data = [0.3, -0.2, 1.1, 0.4, -0.6, 0.9, 0.2, -1.3];
        let x = Ensemble::new(data.to_vec(), 4, 2).unwrap();
        let y = [0.4, -1.1, 0.25, 0.8, -0.3, 0.15];
        let mut fast = vec![0.0; 8];
        obs.apply_jt(&x, &y, &mut fast);
        let j = obs.jacobian_dense(&x).unwrap();
        let mut dense = vec![0.0; 8];
        crate::linsolve::apply_jt(&j, &y, &mut dense);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn monomial_gradients_and_hessians() {
        let obs = ObservableSet::monomial_1d(3, vec![0.0; 3]).unwrap();
        let mut g = [0.0];
        obs.gradient(2, &[2.0], &mut g); // o = x^3
        assert_eq!(g[0], 12.0);
        let mut h = [0.0];
        obs.hessian(2, &[2.0], &mut h);
        assert_eq!(h[0], 12.0);
        assert!(obs.hessian_is_zero(0));
        assert!(!obs.hessian_is_zero(1));

        let obs2 = ObservableSet::monomial_2d(vec![(2, 1)], vec![0.0]).unwrap();
        let mut g2 = [0.0, 0.0];
        obs2.gradient(0, &[1.0, 2.0], &mut g2); // Re^2 Im
        assert_eq!(g2[0], 4.0);
        assert_eq!(g2[1], 1.0);
    }

    #[test]
    fn ideal_changes_zero_dt_is_sampled() {
        let obs = ObservableSet::monomial_1d(3, vec![0.0; 3]).unwrap();
        let x = ens1(&[0.4, -0.3, 1.2]);
        let drift = vec![1.0; 3];
        let dmat = vec![0.5; 3];
        let c = obs.ideal_changes(&x, &drift, &dmat, 0.0).unwrap();
        let sampled = obs.sampled(&x).unwrap();
        for (a, b) in c.iter().zip(sampled.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ideal_changes_ito_isometry_term() {
        // a = 0, constant b: c2 = <x^2> + b^2 dt
        let obs = ObservableSet::monomial_1d(2, vec![0.0; 2]).unwrap();
        let x = ens1(&[0.4, -0.3, 1.2, 0.9]);
        let b2 = 0.25;
        let drift = vec![0.0; 4];
        let dmat = vec![b2; 4];
        let dt = 0.01;
        let c = obs.ideal_changes(&x, &drift, &dmat, dt).unwrap();
        let sampled = obs.sampled(&x).unwrap();
        assert!((c[0] - sampled[0]).abs() < 1e-15);
        assert!((c[1] - (sampled[1] + b2 * dt)).abs() < 1e-15);
    }
}
