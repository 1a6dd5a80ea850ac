//! Linear solvers for the per-step systems.
//!
//! The free scheme only needs symmetric tridiagonal solves. The stabilized
//! scheme adds a rank-`K` term `scale * W W^T`, which is applied matrix-free
//! and inverted with conjugate gradients.

use crate::discretization::TridiagonalOperator;
use crate::error::{Error, Result};

/// Pivots smaller than this abort the Thomas sweep.
pub const MIN_PIVOT: f64 = 1e-300;
/// Residual norm accepted outright when the right-hand side vanishes.
pub const ABSOLUTE_RESIDUAL_FLOOR: f64 = 1e-14;
pub const DEFAULT_CG_TOL: f64 = 1e-10;
/// Tolerance used for low-rank systems when the direct solver is selected.
pub const LOW_RANK_FALLBACK_TOL: f64 = 1e-13;

/// A symmetric linear map on `R^m`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for TridiagonalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        TridiagonalOperator::apply_into(self, x, y)
    }
}

/// Wraps a closure `y <- A x` as an operator.
pub struct FnOperator<F> {
    pub dim: usize,
    pub apply: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (self.apply)(x, y)
    }
}

/// `base + scale * F F^T`, never formed densely.
///
/// `factor` holds the columns of `F`, each of length `base.dim()`.
#[derive(Clone, Debug)]
pub struct LowRankUpdatedOperator<'a> {
    pub base: TridiagonalOperator,
    pub factor: &'a [Vec<f64>],
    pub scale: f64,
}

impl<'a> LowRankUpdatedOperator<'a> {
    pub fn new(base: TridiagonalOperator, factor: &'a [Vec<f64>], scale: f64) -> Result<Self> {
        if let Some(col) = factor.iter().find(|c| c.len() != base.dim()) {
            return Err(Error::Dimension(format!(
                "factor column of length {} for operator of size {}",
                col.len(),
                base.dim()
            )));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be nonnegative, got {scale}")));
        }
        Ok(Self {
            base,
            factor,
            scale,
        })
    }

    pub fn rank(&self) -> usize {
        self.factor.len()
    }
}

impl LinearOperator for LowRankUpdatedOperator<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply_into(x, y);
        if self.scale == 0.0 {
            return;
        }
        for col in self.factor {
            let c = self.scale * dot(col, x);
            for (yi, wi) in y.iter_mut().zip(col) {
                *yi += c * wi;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub fn solve_tridiagonal(op: &TridiagonalOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    let m = op.dim();
    if rhs.len() != m {
        return Err(Error::Dimension(format!(
            "rhs of length {} for operator of size {m}",
            rhs.len()
        )));
    }
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut pivot = op.diag[0];
    if pivot.abs() < MIN_PIVOT || !pivot.is_finite() {
        return Err(Error::SingularPivot {
            index: 0,
            value: pivot,
        });
    }
    if m > 1 {
        c[0] = op.off[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..m {
        pivot = op.diag[i] - op.off[i - 1] * c[i - 1];
        if pivot.abs() < MIN_PIVOT || !pivot.is_finite() {
            return Err(Error::SingularPivot {
                index: i,
                value: pivot,
            });
        }
        if i + 1 < m {
            c[i] = op.off[i] / pivot;
        }
        d[i] = (rhs[i] - op.off[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Result of a converged conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution {
    pub solution: Vec<f64>,
    pub iterations: usize,
}

/// Conjugate gradients from a zero initial guess.
///
/// Stops when `||A x - b|| <= tol ||b||`, checked against the true residual
/// before returning. A zero right-hand side returns zero without iterating.
pub fn solve_cg<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let m = op.dim();
    if rhs.len() != m {
        return Err(Error::Dimension(format!(
            "rhs of length {} for operator of size {m}",
            rhs.len()
        )));
    }
    let b_norm = norm2(rhs);
    let target = if b_norm == 0.0 {
        ABSOLUTE_RESIDUAL_FLOOR
    } else {
        tol * b_norm
    };
    let mut x = vec![0.0; m];
    if b_norm <= target {
        return Ok(CgSolution {
            solution: x,
            iterations: 0,
        });
    }

    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let mut rr = dot(&r, &r);
    let mut best = x.clone();
    let mut best_res = rr.sqrt();
    let mut iterations = 0;

    while iterations < max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        let res = rr_new.sqrt();
        if res <= target {
            // Confirm against the true residual; restart on drift.
            op.apply_into(&x, &mut ap);
            for i in 0..m {
                r[i] = rhs[i] - ap[i];
            }
            let true_rr = dot(&r, &r);
            if true_rr.sqrt() <= target {
                return Ok(CgSolution {
                    solution: x,
                    iterations,
                });
            }
            if true_rr.sqrt() < best_res {
                best_res = true_rr.sqrt();
                best.copy_from_slice(&x);
            }
            p.copy_from_slice(&r);
            rr = true_rr;
            continue;
        }
        if res < best_res {
            best_res = res;
            best.copy_from_slice(&x);
        }
        let beta = rr_new / rr;
        for i in 0..m {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NotConverged {
        iterations,
        relative_residual: best_res / b_norm,
        best,
    })
}

/// Linear solver used for the per-step systems.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum LinearSolver {
    /// Thomas algorithm for tridiagonal systems. Low-rank systems fall back
    /// to CG at [`LOW_RANK_FALLBACK_TOL`].
    #[default]
    Direct,
    Cg { tol: f64, max_iter: usize },
}

impl LinearSolver {
    pub fn cg_default() -> Self {
        LinearSolver::Cg {
            tol: DEFAULT_CG_TOL,
            max_iter: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LinearSolver::Direct => Ok(()),
            LinearSolver::Cg { tol, max_iter } => {
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(Error::invalid(format!("cg tolerance must lie in (0, 1), got {tol}")));
                }
                if max_iter == 0 {
                    return Err(Error::invalid("cg max_iter must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Solves a tridiagonal system; returns the solution and CG iteration count (0 for direct).
    pub fn solve_tridiagonal(&self, op: &TridiagonalOperator, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        match *self {
            LinearSolver::Direct => Ok((solve_tridiagonal(op, rhs)?, 0)),
            LinearSolver::Cg { tol, max_iter } => {
                let s = solve_cg(op, rhs, tol, max_iter)?;
                Ok((s.solution, s.iterations))
            }
        }
    }

    /// Solves a low-rank-updated system. Zero-scale updates take the tridiagonal path.
    pub fn solve_low_rank(&self, op: &LowRankUpdatedOperator<'_>, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        if op.scale == 0.0 || op.factor.is_empty() {
            return self.solve_tridiagonal(&op.base, rhs);
        }
        let (tol, max_iter) = match *self {
            LinearSolver::Direct => (LOW_RANK_FALLBACK_TOL, 20 * op.dim() + 100),
            LinearSolver::Cg { tol, max_iter } => (tol, max_iter),
        };
        let s = solve_cg(op, rhs, tol, max_iter)?;
        Ok((s.solution, s.iterations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> TridiagonalOperator {
        // Strict diagonal dominance with positive diagonal implies SPD.
        let off: Vec<f64> = (0..m.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = (0..m)
            .map(|i| {
                let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < m { off[i].abs() } else { 0.0 };
                left + right + rng.gen_range(0.05..3.0)
            })
            .collect();
        TridiagonalOperator::new(diag, off).unwrap()
    }

    fn residual(op: &dyn LinearOperator, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; b.len()];
        op.apply_into(x, &mut y);
        y.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    }

    #[test]
    fn tridiagonal_identity_and_small_case() {
        let r = vec![0.3, -1.0, 2.5];
        assert_eq!(solve_tridiagonal(&TridiagonalOperator::identity(3), &r).unwrap(), r);
        let op = TridiagonalOperator::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let x = solve_tridiagonal(&op, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tridiagonal_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = random_spd(&mut rng, 100);
        let b: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_tridiagonal(&op, &b).unwrap();
        assert!(residual(&op, &x, &b) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn tridiagonal_singular_pivot() {
        let op = TridiagonalOperator::new(vec![0.0, 1.0], vec![0.0]).unwrap();
        assert!(matches!(
            solve_tridiagonal(&op, &[1.0, 1.0]),
            Err(Error::SingularPivot { index: 0, .. })
        ));
    }

    #[test]
    fn cg_identity_in_one_iteration() {
        let r = vec![1.0, -2.0, 0.5, 4.0];
        let s = solve_cg(&TridiagonalOperator::identity(4), &r, 1e-10, 10).unwrap();
        assert!(s.iterations <= 1);
        for (a, b) in s.solution.iter().zip(&r) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cg_zero_rhs() {
        let op = TridiagonalOperator::identity(5);
        let s = solve_cg(&op, &[0.0; 5], 1e-10, 10).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.solution.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_spd(&mut rng, 50);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        match solve_cg(&op, &b, 1e-14, 2) {
            Err(Error::NotConverged {
                iterations, best, ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 50);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn cg_matches_direct_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let m = rng.gen_range(1..=1000);
            let op = random_spd(&mut rng, m);
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xd = solve_tridiagonal(&op, &b).unwrap();
            let xc = solve_cg(&op, &b, 1e-10, 2 * m + 10).unwrap();
            assert!(xc.iterations <= 2 * m, "trial {trial}: {} iterations for m = {m}", xc.iterations);
            let scale = xd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let diff = xd.iter().zip(&xc.solution).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            assert!(diff <= 1e-8 * scale, "trial {trial}: diff {diff:e}, scale {scale:e}");
        }
    }

    #[test]
    fn zero_scale_update_reproduces_base_iterates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = random_spd(&mut rng, 40);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let lr = LowRankUpdatedOperator::new(op.clone(), &cols, 0.0).unwrap();
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = solve_cg(&op, &b, 1e-12, 200).unwrap();
        let c = solve_cg(&lr, &b, 1e-12, 200).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn low_rank_solve_satisfies_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = random_spd(&mut rng, 80);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let lr = LowRankUpdatedOperator::new(op, &cols, 2.5).unwrap();
        let b: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, it) = LinearSolver::Direct.solve_low_rank(&lr, &b).unwrap();
        assert!(it > 0);
        assert!(residual(&lr, &x, &b) <= LOW_RANK_FALLBACK_TOL * norm2(&b));
    }

    proptest! {
        #[test]
        fn low_rank_apply_matches_dense(seed in any::<u64>(), m in 1usize..=64, k in 0usize..8, scale in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = random_spd(&mut rng, m);
            let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lr = LowRankUpdatedOperator::new(op.clone(), &cols, scale).unwrap();
            let mut y = vec![0.0; m];
            lr.apply_into(&x, &mut y);

            let mut dense = op.to_dense();
            for col in &cols {
                for i in 0..m {
                    for j in 0..m {
                        dense[i][j] += scale * col[i] * col[j];
                    }
                }
            }
            for i in 0..m {
                let yi: f64 = (0..m).map(|j| dense[i][j] * x[j]).sum();
                prop_assert!((yi - y[i]).abs() <= 1e-12 * (1.0 + yi.abs()));
            }
        }
    }
}
