//! Small dense linear algebra for the least-norm Newton update.
//!
//! The systems here are `M×N` with `M` of order ten and `N` of order the
//! sample count, so everything is built around the `M×M` Gram matrix
//! `u = JJ†`: the minimum-norm solution of `J δX = r` is `δX = J† u⁻¹ r`,
//! which costs one `M×M` solve regardless of how many samples there are.
//! A Jacobi SVD of `J` is kept as the fallback for the rare case where `u`
//! is numerically singular.

use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble::first_non_finite;
use crate::error::{PosError, Result};
use crate::fm;
use crate::stats::pairwise_dot;

/// Reciprocal-condition threshold below which `u` is declared singular and
/// the caller should fall back to the SVD path. Below this the Newton step
/// is noise-dominated in double precision.
pub const RCOND_MIN: f64 = 1e-12;

/// Pivot threshold for the LU factorization, relative to `‖u‖_∞`.
const PIVOT_MIN: f64 = 1e-14;

/// Default relative cutoff for truncating singular values in the
/// pseudo-inverse.
pub const SVD_DEFAULT_CUTOFF: f64 = 1e-12;

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PosError::InvalidInput("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(PosError::InvalidInput("matrix data length must equal rows * cols"));
        }
        if let Some(index) = first_non_finite(&data) {
            return Err(PosError::NonFinite { context: "matrix entries", index });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// The `M×M` positive semi-definite matrix `u = JJ†`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    mat: DenseMatrix,
}

impl GramMatrix {
    pub fn order(&self) -> usize {
        self.mat.rows()
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.mat
    }

    /// Wraps an externally assembled symmetric matrix (used by the fast
    /// moment-based assembly paths).
    pub fn from_symmetric(mat: DenseMatrix) -> Result<Self> {
        if mat.rows() != mat.cols() {
            return Err(PosError::InvalidInput("gram matrix must be square"));
        }
        Ok(GramMatrix { mat })
    }
}

/// `u = J·Jᵀ`, symmetric by construction (the upper triangle is mirrored).
pub fn gram(j: &DenseMatrix) -> GramMatrix {
    let m = j.rows();
    let mut u = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = pairwise_dot(j.row(a), j.row(b));
            u.set(a, b, v);
            u.set(b, a, v);
        }
    }
    GramMatrix { mat: u }
}

/// LU factorization with partial pivoting, in place. `piv[k]` records the
/// row swapped into position `k`.
fn lu_factor(a: &mut [f64], m: usize, piv: &mut [usize]) -> Result<()> {
    let norm_inf = (0..m)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..m {
                s += fm::abs(a[i * m + j]);
            }
            s
        })
        .fold(0.0f64, f64::max);
    for k in 0..m {
        let mut p = k;
        let mut best = fm::abs(a[k * m + k]);
        for i in k + 1..m {
            let v = fm::abs(a[i * m + k]);
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < PIVOT_MIN * norm_inf || best == 0.0 {
            return Err(PosError::SingularGram { rcond: best / norm_inf.max(f64::MIN_POSITIVE) });
        }
        if p != k {
            for j in 0..m {
                a.swap(k * m + j, p * m + j);
            }
        }
        piv[k] = p;
        let pivot = a[k * m + k];
        for i in k + 1..m {
            let f = a[i * m + k] / pivot;
            a[i * m + k] = f;
            for j in k + 1..m {
                a[i * m + j] -= f * a[k * m + j];
            }
        }
    }
    Ok(())
}

fn lu_solve(a: &[f64], m: usize, piv: &[usize], b: &mut [f64]) {
    for k in 0..m {
        b.swap(k, piv[k]);
        for i in k + 1..m {
            b[i] -= a[i * m + k] * b[k];
        }
    }
    for k in (0..m).rev() {
        for j in k + 1..m {
            b[k] -= a[k * m + j] * b[j];
        }
        b[k] /= a[k * m + k];
    }
}

fn norm1(a: &[f64], m: usize) -> f64 {
    (0..m)
        .map(|j| {
            let mut s = 0.0;
            for i in 0..m {
                s += fm::abs(a[i * m + j]);
            }
            s
        })
        .fold(0.0f64, f64::max)
}

/// Reciprocal 1-norm condition number from an LU factorization; the inverse
/// norm is computed exactly by solving for each unit vector (`M` is small).
fn rcond_from_lu(orig_norm1: f64, lu: &[f64], m: usize, piv: &[usize]) -> f64 {
    let mut inv_norm = 0.0f64;
    let mut col = vec![0.0; m];
    for j in 0..m {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        lu_solve(lu, m, piv, &mut col);
        let s: f64 = col.iter().map(|v| fm::abs(*v)).sum();
        inv_norm = inv_norm.max(s);
    }
    if orig_norm1 == 0.0 || inv_norm == 0.0 {
        return 0.0;
    }
    1.0 / (orig_norm1 * inv_norm)
}

/// Solution of the `M×M` system together with the reciprocal-condition
/// estimate of the matrix that was factored.
#[derive(Debug, Clone)]
pub struct MxmSolution {
    pub x: Vec<f64>,
    pub rcond: f64,
}

/// Solves `u·x = rhs` by LU with partial pivoting.
pub fn solve_mxm(u: &GramMatrix, rhs: &[f64]) -> Result<MxmSolution> {
    let m = u.order();
    if rhs.len() != m {
        return Err(PosError::InvalidInput("rhs length must equal the gram order"));
    }
    let mut a = u.as_matrix().as_slice().to_vec();
    let n1 = norm1(&a, m);
    let mut piv = vec![0usize; m];
    lu_factor(&mut a, m, &mut piv)?;
    let rcond = rcond_from_lu(n1, &a, m, &piv);
    let mut x = rhs.to_vec();
    lu_solve(&a, m, &piv, &mut x);
    Ok(MxmSolution { x, rcond })
}

/// Minimum-Euclidean-norm solution of the underdetermined system
/// `J·δX = rhs`, computed as `δX = Jᵀ u⁻¹ rhs` with `u = JJᵀ`.
///
/// The Gram system is symmetrically equilibrated by its diagonal before
/// factoring, which makes the solve invariant (to rounding) under rescaling
/// of individual observables. Fails with [`PosError::SingularGram`] when the
/// equilibrated matrix has a reciprocal condition estimate below
/// [`RCOND_MIN`]; the caller may then fall back to [`svd_pinv_apply`].
pub fn least_norm_solve(j: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let u = gram(j);
    let y = solve_gram_equilibrated(&u, rhs)?;
    let mut delta = vec![0.0; j.cols()];
    apply_jt(j, &y, &mut delta);
    Ok(delta)
}

/// `δX = Jᵀ·y`, accumulated row by row.
pub fn apply_jt(j: &DenseMatrix, y: &[f64], delta: &mut [f64]) {
    delta.iter_mut().for_each(|v| *v = 0.0);
    for m in 0..j.rows() {
        let w = y[m];
        if w == 0.0 {
            continue;
        }
        for (d, &v) in delta.iter_mut().zip(j.row(m)) {
            *d += w * v;
        }
    }
}

/// Solves `u·y = rhs` with symmetric diagonal equilibration and the
/// [`RCOND_MIN`] singularity gate. Shared by the dense and moment-based
/// assembly paths.
pub fn solve_gram_equilibrated(u: &GramMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let m = u.order();
    if rhs.len() != m {
        return Err(PosError::InvalidInput("rhs length must equal the gram order"));
    }
    let mut d = vec![0.0; m];
    for i in 0..m {
        let uii = u.as_matrix().get(i, i);
        d[i] = if uii > 0.0 { 1.0 / fm::sqrt(uii) } else { 1.0 };
    }
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for jj in 0..m {
            a[i * m + jj] = u.as_matrix().get(i, jj) * d[i] * d[jj];
        }
    }
    let n1 = norm1(&a, m);
    let mut piv = vec![0usize; m];
    lu_factor(&mut a, m, &mut piv)?;
    let rcond = rcond_from_lu(n1, &a, m, &piv);
    if rcond < RCOND_MIN {
        return Err(PosError::SingularGram { rcond });
    }
    let mut y: Vec<f64> = rhs.iter().zip(d.iter()).map(|(r, di)| r * di).collect();
    lu_solve(&a, m, &piv, &mut y);
    for (yi, di) in y.iter_mut().zip(d.iter()) {
        *yi *= di;
    }
    Ok(y)
}

/// Moore–Penrose pseudo-inverse action `δX = J⁺·rhs` via a one-sided
/// (Hestenes) Jacobi SVD of `Jᵀ`, with singular values below
/// `rel_cutoff · σ_max` truncated.
///
/// Handles rank-deficient `J`; this is the fallback used when the Gram
/// matrix cannot be inverted.
pub fn svd_pinv_apply(j: &DenseMatrix, rhs: &[f64], rel_cutoff: f64) -> Result<Vec<f64>> {
    if !(rel_cutoff > 0.0 && rel_cutoff < 1.0) {
        return Err(PosError::InvalidInput("svd cutoff must lie in (0, 1)"));
    }
    let m = j.rows();
    let n = j.cols();
    if rhs.len() != m {
        return Err(PosError::InvalidInput("rhs length must equal the row count"));
    }
    // Rows of `j` are the columns of A = Jᵀ; rotate them pairwise until
    // mutually orthogonal, accumulating the rotations in V.
    let mut b = j.as_slice().to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    const TOL: f64 = 1e-15;
    const MAX_SWEEPS: usize = 30;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let (bp, bq) = b.split_at_mut(q * n);
                let bp = &mut bp[p * n..p * n + n];
                let bq = &mut bq[..n];
                let alpha = pairwise_dot(bp, bp);
                let beta = pairwise_dot(bq, bq);
                let gamma = pairwise_dot(bp, bq);
                if gamma == 0.0 || fm::abs(gamma) <= TOL * fm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + fm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + fm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / fm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..n {
                    let xp = bp[i];
                    let xq = bq[i];
                    bp[i] = c * xp - s * xq;
                    bq[i] = s * xp + c * xq;
                }
                for row in v.chunks_exact_mut(m) {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PosError::Numeric("jacobi svd did not converge"));
    }
    let sigma: Vec<f64> = (0..m).map(|i| fm::sqrt(pairwise_dot(&b[i * n..i * n + n], &b[i * n..i * n + n]))).collect();
    let sigma_max = sigma.iter().fold(0.0f64, |a, &s| a.max(s));
    let cutoff = rel_cutoff * sigma_max;
    // t = Vᵀ rhs, then δX = Σ_k b_k t_k / σ_k² over the kept values.
    let mut delta = vec![0.0; n];
    for k in 0..m {
        if sigma[k] <= cutoff || sigma[k] == 0.0 {
            continue;
        }
        let mut t = 0.0;
        for i in 0..m {
            t += v[i * m + k] * rhs[i];
        }
        let w = t / (sigma[k] * sigma[k]);
        for (d, &bv) in delta.iter_mut().zip(&b[k * n..k * n + n]) {
            *d += w * bv;
        }
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn gram_of_identity_like() {
        let j = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let u = gram(&j);
        assert_eq!(u.as_matrix().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn gram_of_half_row() {
        let j = mat(1, 2, &[0.5, 0.5]);
        let u = gram(&j);
        assert_eq!(u.as_matrix().get(0, 0), 0.5);
    }

    #[test]
    fn gram_matches_brute_force() {
        // deterministic pseudo-random 4x50 matrix
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let data: Vec<f64> = (0..200).map(|_| next()).collect();
        let j = mat(4, 50, &data);
        let u = gram(&j);
        for a in 0..4 {
            for b in 0..4 {
                let mut s = 0.0;
                for k in 0..50 {
                    s += j.get(a, k) * j.get(b, k);
                }
                let rel = (u.as_matrix().get(a, b) - s).abs() / s.abs().max(1e-30);
                assert!(rel < 1e-13, "entry ({a},{b}) off by {rel}");
            }
        }
    }

    #[test]
    fn solve_mxm_identity_and_diagonal() {
        let u = GramMatrix::from_symmetric(mat(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let sol = solve_mxm(&u, &[3.0, -4.0]).unwrap();
        assert_eq!(sol.x, vec![3.0, -4.0]);
        assert!((sol.rcond - 1.0).abs() < 1e-14);

        let u = GramMatrix::from_symmetric(mat(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        let sol = solve_mxm(&u, &[2.0, 4.0]).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15 && (sol.x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_mxm_flags_singular() {
        let u = GramMatrix::from_symmetric(mat(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(solve_mxm(&u, &[1.0, 1.0]), Err(PosError::SingularGram { .. })));
    }

    #[test]
    fn least_norm_uniform_mean_shift() {
        let j = mat(1, 2, &[0.5, 0.5]);
        let delta = least_norm_solve(&j, &[0.7]).unwrap();
        assert!((delta[0] - 0.7).abs() < 1e-15 && (delta[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn least_norm_zero_rhs() {
        let j = mat(2, 5, &[1.0, 2.0, 3.0, 4.0, 5.0, -1.0, 0.5, 0.0, 2.0, 1.0]);
        let delta = least_norm_solve(&j, &[0.0, 0.0]).unwrap();
        assert!(delta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn svd_truncates_rank_deficient_diagonal() {
        let j = mat(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let delta = svd_pinv_apply(&j, &[4.0, 1.0], 1e-12).unwrap();
        assert!((delta[0] - 2.0).abs() < 1e-14);
        assert_eq!(delta[1], 0.0);
    }

    #[test]
    fn svd_of_zero_matrix_is_zero() {
        let j = mat(2, 3, &[0.0; 6]);
        let delta = svd_pinv_apply(&j, &[1.0, 2.0], 1e-12).unwrap();
        assert!(delta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn svd_rejects_bad_cutoff() {
        let j = mat(1, 1, &[1.0]);
        assert!(svd_pinv_apply(&j, &[1.0], 0.0).is_err());
        assert!(svd_pinv_apply(&j, &[1.0], 1.0).is_err());
    }

    #[test]
    fn solvers_agree_on_fixed_system() {
        let j = mat(
            3,
            6,
            &[
                0.8, -0.2, 0.4, 1.1, -0.7, 0.3, //
                0.1, 0.9, -0.5, 0.2, 0.6, -1.0, //
                -0.3, 0.4, 0.7, -0.6, 0.2, 0.5,
            ],
        );
        let rhs = [0.3, -1.2, 0.8];
        let a = least_norm_solve(&j, &rhs).unwrap();
        let b = svd_pinv_apply(&j, &rhs, 1e-12).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
        }
        // residual check: J delta = rhs
        for r in 0..3 {
            let got: f64 = j.row(r).iter().zip(a.iter()).map(|(jj, d)| jj * d).sum();
            assert!((got - rhs[r]).abs() < 1e-10 * rhs[r].abs().max(1.0));
        }
    }
}
