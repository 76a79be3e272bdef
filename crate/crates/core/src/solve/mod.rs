//! Preconditioned conjugate gradients with a Lanczos estimate of the
//! preconditioned condition number.

mod precond;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use precond::{compose_preconditioner, Preconditioner, PreconditionerKind};

use crate::linalg::{dot, spmv_into, Csr};

/// A symmetric linear map on `R^n`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for Csr {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        spmv_into(self, x, y);
    }
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Diagonal scaling `y = d ∘ x`.
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((y, x), d) in y.iter_mut().zip(x).zip(&self.0) {
            *y = d * x;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// `pᵀAp ≤ 0` or `rᵀBr ≤ 0`: an operator is not positive definite.
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖r_k‖₂ / ‖b‖₂` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    pub cond_estimate: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub status: SolveStatus,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000 }
    }
}

/// Solve `A x = b` from `x = 0`, stopping once `‖b − Ax‖₂ ≤ tol ‖b‖₂`.
pub fn pcg(
    a: &dyn LinearOperator,
    b_pre: &dyn LinearOperator,
    rhs: &[f64],
    opts: PcgOptions,
) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = a.dim();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut residuals = vec![1.0];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    if bnorm == 0.0 {
        residuals[0] = 0.0;
        return (x, report(0, residuals, &alphas, &betas, SolveStatus::Converged, start));
    }
    let mut z = vec![0.0; n];
    b_pre.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while it < opts.max_iter {
        if !(rz > 0.0) {
            status = SolveStatus::Breakdown;
            break;
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            status = SolveStatus::Breakdown;
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        alphas.push(alpha);
        let rel = dot(&r, &r).sqrt() / bnorm;
        residuals.push(rel);
        if rel <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        b_pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, report(it, residuals, &alphas, &betas, status, start))
}

fn report(
    iterations: usize,
    residuals: Vec<f64>,
    alphas: &[f64],
    betas: &[f64],
    status: SolveStatus,
    start: Instant,
) -> SolveReport {
    let (lambda_min, lambda_max) = lanczos_extremes(alphas, betas);
    let cond_estimate = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
    SolveReport {
        iterations,
        residuals,
        cond_estimate,
        lambda_min,
        lambda_max,
        status,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Lanczos tridiagonal matrix implied by the CG coefficients, as
/// `(diagonal, off-diagonal)`.
pub fn lanczos_tridiagonal(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = alphas.len();
    let mut d = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut v = 1.0 / alphas[j];
        if j > 0 {
            v += betas[j - 1] / alphas[j - 1];
            e.push(betas[j - 1].sqrt() / alphas[j - 1]);
        }
        d.push(v);
    }
    (d, e)
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] } else { 0.0 };
        q = d[i] - x - if i > 0 { off / q } else { 0.0 };
        if q == 0.0 {
            q = f64::EPSILON * (d[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal
/// matrix, by bisection on the Sturm sequence.
pub fn tridiagonal_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * scale || mid == lo || mid == hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Extremal Ritz values `(λ_min, λ_max)` of the preconditioned operator.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    if alphas.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let (d, e) = lanczos_tridiagonal(alphas, betas);
    let n = d.len();
    (tridiagonal_eigenvalue(&d, &e, 0), tridiagonal_eigenvalue(&d, &e, n - 1))
}

/// Run PCG on a seeded random right-hand side for `min(N, max_iter)` steps and
/// return the Lanczos estimate of `κ(BA)`. Iteration stops only when the
/// residual reaches rounding level, where further Lanczos steps carry no
/// information.
pub fn estimate_condition(
    a: &dyn LinearOperator,
    b_pre: &dyn LinearOperator,
    max_iter: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rhs: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let opts = PcgOptions { tol: 1e-14, max_iter: max_iter.min(a.dim()) };
    pcg(a, b_pre, &rhs, opts).1.cond_estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_dense;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn identity_one_step() {
        let a = Identity(5);
        let (x, rep) = pcg(&a, &Identity(5), &[1.0, 2.0, 3.0, 4.0, 5.0], PcgOptions::default());
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged());
        assert_abs_diff_eq!(x[4], 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.cond_estimate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_condition() {
        let a = from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]), 0.0);
        let (_, rep) = pcg(&a, &Identity(2), &[1.0, 1.0], PcgOptions { tol: 1e-14, max_iter: 2 });
        assert_eq!(rep.iterations, 2);
        assert_abs_diff_eq!(rep.cond_estimate, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn detects_indefinite() {
        let a = from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 0.0);
        let (_, rep) = pcg(&a, &Identity(2), &[0.0, 1.0], PcgOptions::default());
        assert_eq!(rep.status, SolveStatus::Breakdown);
    }

    #[test]
    fn sturm_bisection_matches_dense() {
        let d = [2.0, 3.0, 1.0, 4.0];
        let e = [0.5, -1.0, 0.25];
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            m[(i, i)] = d[i];
        }
        for i in 0..3 {
            m[(i, i + 1)] = e[i];
            m[(i + 1, i)] = e[i];
        }
        let ev = crate::linalg::sorted_eigenvalues(m);
        for k in 0..4 {
            assert_abs_diff_eq!(tridiagonal_eigenvalue(&d, &e, k), ev[k], epsilon = 1e-12);
        }
    }
}
