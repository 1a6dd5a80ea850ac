//! Feedback mode bases and the prescriptions for how many modes and how much
//! gain are needed.
//!
//! Mode vectors are the discrete Dirichlet sine eigenvectors of `Delta_h`,
//! `w_j(i) ~ sin(j pi i / n)`, normalized to unit l2 norm. The zero-state plan
//! starts from the continuous prescription `K = ceil(sqrt(mu) L / pi) + 1` and
//! extends it when the discrete spectrum has more eigenvalues below the
//! threshold than the continuous one.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Grid1D, Parameters1D, Parameters2D, State1D};

/// Eigenvalue `(2 - 2 cos(j pi / n)) / dx^2` of `Delta_h`, `1 <= j <= n - 1`.
pub fn discrete_eigenvalue(grid: &Grid1D, j: usize) -> f64 {
    // 2 - 2 cos(t) = 4 sin^2(t / 2), without the cancellation for small t.
    let s = (j as f64 * PI / (2.0 * grid.n as f64)).sin();
    4.0 * s * s / (grid.dx * grid.dx)
}

/// Continuous Dirichlet eigenvalue `(j pi / L)^2`.
pub fn continuous_eigenvalue(length: f64, j: usize) -> f64 {
    let k = j as f64 * PI / length;
    k * k
}

/// Unit-norm discrete sine vector for mode `j` on interior nodes.
pub fn sine_mode(grid: &Grid1D, j: usize) -> Vec<f64> {
    let n = grid.n as f64;
    let mut v: Vec<f64> = (1..grid.n)
        .map(|i| (j as f64 * PI * i as f64 / n).sin())
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// The first `K` sine eigenvectors of `Delta_h` together with the gain `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    /// Column `j - 1` holds mode `j`.
    pub vectors: Vec<Vec<f64>>,
    pub mu: f64,
    pub eigenvalues: Vec<f64>,
}

impl ModeBasis {
    pub fn k_modes(&self) -> usize {
        self.vectors.len()
    }

    /// `W^T x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `mu * sum_j |(u, w_j)|^2` for a complex field given by its parts.
    pub fn control_energy(&self, re: &[f64], im: &[f64]) -> f64 {
        let pr = self.project(re);
        let pi = self.project(im);
        self.mu * pr.iter().chain(&pi).map(|c| c * c).sum::<f64>()
    }
}

pub fn build_mode_basis(grid: &Grid1D, k_modes: usize, mu: f64) -> Result<ModeBasis> {
    if k_modes > grid.interior() {
        return Err(Error::invalid(format!(
            "k_modes must lie in 0..={}, got {k_modes}",
            grid.interior()
        )));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be nonnegative, got {mu}")));
    }
    Ok(ModeBasis {
        vectors: (1..=k_modes).map(|j| sine_mode(grid, j)).collect(),
        mu,
        eigenvalues: (1..=k_modes).map(|j| discrete_eigenvalue(grid, j)).collect(),
    })
}

/// `min_j (lambda_j + mu [j <= K]) - sup_norm`: positive when every discrete
/// mode is damped by the stabilized step for an explicit coefficient bounded
/// by `sup_norm`.
pub fn full_damping_margin(grid: &Grid1D, mu: f64, k_modes: usize, sup_norm: f64) -> f64 {
    (1..=grid.interior())
        .map(|j| discrete_eigenvalue(grid, j) + if j <= k_modes { mu } else { 0.0 })
        .fold(f64::INFINITY, f64::min)
        - sup_norm
}

/// Gain and mode count for zero-state stabilization.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizationPlan {
    pub mu: f64,
    /// Number of modes to use.
    pub k_modes: usize,
    /// `ceil(sqrt(mu) L / pi) + 1`, before discrete extension and clamping.
    pub k_prescribed: usize,
    pub epsilon: f64,
    /// `max(1, ||A^0||^2)` with the unscaled vector norm.
    pub threshold: f64,
    /// The required count exceeded `n - 1`.
    pub clamped: bool,
    /// Discrete modes with `lambda_j <= threshold` beyond `k_prescribed`.
    pub uncovered_by_prescription: Vec<usize>,
    /// Modes `(j, lambda_j)` for which `lambda_j + mu ||W^T V_j||^2 < threshold + epsilon`.
    pub violations: Vec<(usize, f64)>,
}

impl StabilizationPlan {
    pub fn satisfies_criterion(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn plan_zero_stabilization(a0: &State1D, grid: &Grid1D, epsilon: f64) -> Result<StabilizationPlan> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    a0.validate(grid)?;
    let threshold = a0.a_norm_sq().max(1.0);
    let mu = threshold;
    let m = grid.interior();
    let k_prescribed = (mu.sqrt() * grid.length() / PI).ceil() as usize + 1;

    let below: Vec<usize> = (1..=m)
        .filter(|&j| discrete_eigenvalue(grid, j) <= threshold)
        .collect();
    let k_needed = below.last().copied().unwrap_or(0);
    let wanted = k_prescribed.max(k_needed);
    let clamped = wanted > m;
    let k_modes = wanted.min(m);

    let uncovered_by_prescription = below.iter().copied().filter(|&j| j > k_prescribed).collect();
    let violations = below
        .iter()
        .map(|&j| (j, discrete_eigenvalue(grid, j)))
        .filter(|&(j, lam)| lam + if j <= k_modes { mu } else { 0.0 } < threshold + epsilon)
        .collect();

    Ok(StabilizationPlan {
        mu,
        k_modes,
        k_prescribed,
        epsilon,
        threshold,
        clamped,
        uncovered_by_prescription,
        violations,
    })
}

/// Outcome of the two-dimensional mode-count selector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCount2D {
    /// Smallest `N` with `lambda_{N+1} > 1 / delta0`.
    pub n_required: usize,
    /// `2 (1 - c1) / (2 + c2)`.
    pub delta0: f64,
    /// Enumerated eigenvalues, ascending with multiplicity.
    pub eigenvalues: Vec<f64>,
}

pub fn mode_count_2d(params: &Parameters2D, max_index: usize) -> Result<ModeCount2D> {
    if params.c1 >= 1.0 {
        return Err(Error::invalid(format!(
            "mode count needs c1 < 1 for a positive delta0, got c1 = {}",
            params.c1
        )));
    }
    if max_index == 0 {
        return Err(Error::invalid("max_index must be positive"));
    }
    let delta0 = 2.0 * (1.0 - params.c1) / (2.0 + params.c2);
    let bound = 1.0 / delta0;
    let (ix, iy) = (1.0 / (params.lx * params.lx), 1.0 / (params.ly * params.ly));
    let eig = |m: usize, n: usize| PI * PI * ((m * m) as f64 * ix + (n * n) as f64 * iy);

    let mut eigenvalues: Vec<f64> = (1..=max_index)
        .flat_map(|m| (1..=max_index).map(move |n| (m, n)))
        .map(|(m, n)| eig(m, n))
        .collect();
    eigenvalues.sort_by(f64::total_cmp);

    // Every eigenvalue left out of the enumeration is at least this large.
    let smallest_omitted = eig(max_index + 1, 1).min(eig(1, max_index + 1));
    if smallest_omitted <= bound {
        return Err(Error::invalid(format!(
            "max_index {max_index} too small: eigenvalues up to 1/delta0 = {bound} are not all enumerated"
        )));
    }
    let n_required = eigenvalues.iter().take_while(|&&l| l <= bound).count();
    Ok(ModeCount2D {
        n_required,
        delta0,
        eigenvalues,
    })
}

/// One inequality of the tracking conditions, `lhs <= rhs` or `lhs >= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

/// Evaluation of the four sufficient conditions for exponential tracking.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingConditionReport {
    pub m0: f64,
    pub checks: [ConditionCheck; 4],
    pub min_n1: usize,
    pub min_n2: usize,
    pub min_mu1: f64,
    pub min_mu2: f64,
}

impl TrackingConditionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Smallest `n >= 0` such that `pred(n)` holds, for a predicate monotone in `n`.
fn smallest_mode_count(guess: f64, pred: impl Fn(usize) -> bool) -> usize {
    let mut n = if guess.is_finite() && guess > 0.0 { guess as usize } else { 0 };
    while !pred(n) {
        n += 1;
    }
    while n > 0 && pred(n - 1) {
        n -= 1;
    }
    n
}

pub fn check_tracking_conditions(
    m0: f64,
    params: &Parameters1D,
    mu1: f64,
    mu2: f64,
    n1: usize,
    n2: usize,
) -> Result<TrackingConditionReport> {
    if !(m0 >= 0.0 && m0.is_finite()) {
        return Err(Error::invalid(format!("m0 must be nonnegative, got {m0}")));
    }
    let lam = |k: usize| continuous_eigenvalue(params.length, k);
    let a_coef = 1.0 + 6.0 * m0;
    let p_coef = 6.0 * m0;

    let cond_a = |n: usize| a_coef / lam(n + 1) <= 0.5;
    let cond_p = |n: usize| p_coef / lam(n + 1) <= params.d1 / 2.0;

    let checks = [
        ConditionCheck {
            name: "(1+6 M0) / lambda_{N1+1} <= 1/2",
            lhs: a_coef / lam(n1 + 1),
            rhs: 0.5,
            passed: cond_a(n1),
        },
        ConditionCheck {
            name: "6 M0 / lambda_{N2+1} <= D1/2",
            lhs: p_coef / lam(n2 + 1),
            rhs: params.d1 / 2.0,
            passed: cond_p(n2),
        },
        ConditionCheck {
            name: "mu1 >= 1 + 6 M0",
            lhs: mu1,
            rhs: a_coef,
            passed: mu1 >= a_coef,
        },
        ConditionCheck {
            name: "mu2 + h >= 6 M0",
            lhs: mu2 + params.h,
            rhs: p_coef,
            passed: mu2 + params.h >= p_coef,
        },
    ];

    let guess = |t: f64| params.length * t.sqrt() / PI - 2.0;
    Ok(TrackingConditionReport {
        m0,
        min_n1: smallest_mode_count(guess(2.0 * a_coef), cond_a),
        min_n2: smallest_mode_count(guess(2.0 * p_coef / params.d1), cond_p),
        min_mu1: a_coef,
        min_mu2: (p_coef - params.h).max(0.0),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::laplacian;
    use crate::model::{initial_condition, InitialCondition};
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn first_mode_closed_form() {
        let g = Grid1D::new(4, 2.0, 0.1).unwrap();
        let b = build_mode_basis(&g, 1, 1.0).unwrap();
        let s = 2f64.sqrt() / 2.0;
        let raw = [s, 1.0, s];
        let norm = (raw.iter().map(|x| x * x).sum::<f64>()).sqrt();
        for (v, r) in b.vectors[0].iter().zip(raw) {
            assert!((v - r / norm).abs() < 1e-15);
        }
        let expected = (2.0 - 2f64.sqrt()) / (g.dx * g.dx);
        assert!((b.eigenvalues[0] - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn basis_is_orthonormal_eigenbasis() {
        for &(n, length) in &[(8usize, 1.0), (64, 10.0), (257, 100.0)] {
            let g = Grid1D::new(n, length, 0.1).unwrap();
            let b = build_mode_basis(&g, n - 1, 2.0).unwrap();
            let lap = laplacian(&g);
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    let d: f64 = b.vectors[i].iter().zip(&b.vectors[j]).map(|(x, y)| x * y).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    let tol = if i == j { 1e-12 } else { 1e-10 };
                    assert!((d - want).abs() < tol, "n={n} ({i},{j}): {d}");
                }
                let lw = lap.apply(&b.vectors[i]);
                let res: f64 = lw
                    .iter()
                    .zip(&b.vectors[i])
                    .map(|(a, w)| (a - b.eigenvalues[i] * w).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10, "n={n} mode {}: residual {res:e}", i + 1);
            }
        }
    }

    #[test]
    fn discrete_eigenvalue_converges_to_continuum() {
        let length = 100.0;
        let g = Grid1D::new(1 << 14, length, 0.1).unwrap();
        let d = discrete_eigenvalue(&g, 1);
        let c = continuous_eigenvalue(length, 1);
        assert!(((d - c) / c).abs() < 1e-6);
        // and sits below it for every mode
        for j in 1..(1 << 14) {
            assert!(discrete_eigenvalue(&g, j) < continuous_eigenvalue(length, j));
        }
    }

    #[test]
    fn mode_count_out_of_range() {
        let g = Grid1D::new(8, 1.0, 0.1).unwrap();
        assert!(build_mode_basis(&g, 8, 1.0).is_err());
        assert!(build_mode_basis(&g, 7, 1.0).is_ok());
    }

    fn state_with_norm(grid: &Grid1D, norm_sq: f64) -> State1D {
        let mut s = State1D::zeros(grid);
        let m = grid.interior() as f64;
        for z in &mut s.a[1..grid.n] {
            *z = Complex64::new((norm_sq / m).sqrt(), 0.0);
        }
        s
    }

    #[test]
    fn plan_unit_norm() {
        let g = Grid1D::new(512, 100.0, 0.1).unwrap();
        let p = plan_zero_stabilization(&state_with_norm(&g, 1.0), &g, 1e-4).unwrap();
        assert!((p.mu - 1.0).abs() < 1e-12);
        assert_eq!(p.k_prescribed, 33);
        assert_eq!(p.k_modes, 33);
        assert!(p.satisfies_criterion());
        assert!(!p.clamped);
    }

    #[test]
    fn plan_zero_state_binds_at_one() {
        let g = Grid1D::new(64, 10.0, 0.1).unwrap();
        let p = plan_zero_stabilization(&State1D::zeros(&g), &g, 1e-3).unwrap();
        assert_eq!(p.mu, 1.0);
        assert_eq!(p.threshold, 1.0);
    }

    #[test]
    fn plan_matches_published_mode_count() {
        let g = Grid1D::new(512, 100.0, 0.1).unwrap();
        let p = plan_zero_stabilization(&state_with_norm(&g, 21.0), &g, 1e-4).unwrap();
        assert_eq!(p.k_prescribed, 147);
        // The discrete spectrum has eigenvalues <= 21 up to mode 151.
        assert_eq!(p.uncovered_by_prescription, vec![148, 149, 150, 151]);
        assert_eq!(p.k_modes, 151);
        assert!(p.satisfies_criterion());
    }

    #[test]
    fn plan_clamps_on_coarse_grid() {
        let g = Grid1D::new(16, 100.0, 0.1).unwrap();
        let p = plan_zero_stabilization(&state_with_norm(&g, 4.0), &g, 1e-4).unwrap();
        assert!(p.clamped);
        assert_eq!(p.k_modes, 15);
    }

    #[test]
    fn plan_reports_epsilon_violation() {
        // epsilon larger than lambda_1 cannot be met by mode 1 when mu == threshold.
        let g = Grid1D::new(128, 100.0, 0.1).unwrap();
        let p = plan_zero_stabilization(&State1D::zeros(&g), &g, 0.5).unwrap();
        assert!(!p.satisfies_criterion());
        assert_eq!(p.violations[0].0, 1);
    }

    #[test]
    fn mode_count_square_examples() {
        let mk = |c1, c2| Parameters2D::new(1.0, 1.0, 1.0, 0.1, c1, c2, 0.0, PI, PI).unwrap();
        let r = mode_count_2d(&mk(0.5, 1.0), 10).unwrap();
        assert!((r.delta0 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.n_required, 1);
        assert!((r.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 5.0).abs() < 1e-12);
        assert!((r.eigenvalues[2] - 5.0).abs() < 1e-12);
        assert!((r.eigenvalues[3] - 8.0).abs() < 1e-12);

        let r = mode_count_2d(&mk(0.0, 0.0), 10).unwrap();
        assert_eq!(r.delta0, 1.0);
        assert_eq!(r.n_required, 0);
    }

    #[test]
    fn mode_count_degenerate_limit_errors() {
        let p = Parameters2D::new(1.0, 1.0, 1.0, 0.1, 1.0 - 1e-9, 0.0, 0.0, PI, PI).unwrap();
        assert!(mode_count_2d(&p, 50).is_err());
    }

    proptest! {
        #[test]
        fn mode_count_monotone_in_c1(c1a in 0.0f64..0.9, dc in 0.0f64..0.09, c2 in 0.0f64..3.0, lx in 0.5f64..4.0, ly in 0.5f64..4.0) {
            let mk = |c1| Parameters2D::new(1.0, 1.0, 1.0, 0.1, c1, c2, 0.0, lx, ly).unwrap();
            let a = mode_count_2d(&mk(c1a), 200).unwrap();
            let b = mode_count_2d(&mk(c1a + dc), 200).unwrap();
            prop_assert!(b.n_required >= a.n_required);
        }

        #[test]
        fn plan_covers_every_discrete_eigenvalue_below_threshold(seed in any::<u64>(), amp in 0.0f64..0.5, n in 8usize..400, length in 1.0f64..150.0) {
            let g = Grid1D::new(n, length, 0.1).unwrap();
            let s = initial_condition(&InitialCondition::Oscillatory { seed, amplitude: amp }, &g).unwrap();
            let p = plan_zero_stabilization(&s, &g, 1e-12).unwrap();
            if !p.clamped {
                for j in 1..n {
                    if discrete_eigenvalue(&g, j) <= p.threshold {
                        prop_assert!(j <= p.k_modes);
                    }
                }
                prop_assert!(p.k_modes >= p.k_prescribed);
            }
        }
    }

    #[test]
    fn tracking_conditions_zero_bound() {
        let p = Parameters1D::new(1.0, 1.0, 0.0, 10.0).unwrap();
        let r = check_tracking_conditions(0.0, &p, 1.0, 0.0, 5, 1).unwrap();
        assert_eq!(r.min_mu1, 1.0);
        assert_eq!(r.min_mu2, 0.0);
        // lambda_{N1+1} >= 2 -> (N1+1) pi / 10 >= sqrt 2 -> N1 + 1 >= 4.5
        assert_eq!(r.min_n1, 4);
        assert_eq!(r.min_n2, 0);
        assert!(r.passed());
    }

    #[test]
    fn tracking_conditions_unit_bound() {
        let p = Parameters1D::new(1.0, 1.0, 0.25, PI).unwrap();
        let r = check_tracking_conditions(1.0, &p, 7.0, 5.75, 3, 3).unwrap();
        assert_eq!(r.min_n1, 3);
        assert_eq!(r.min_n2, 3);
        assert_eq!(r.min_mu1, 7.0);
        assert_eq!(r.min_mu2, 5.75);
        assert!(r.passed());
        let r = check_tracking_conditions(1.0, &p, 6.9, 5.75, 2, 3).unwrap();
        assert!(!r.checks[0].passed);
        assert!(r.checks[1].passed);
        assert!(!r.checks[2].passed);
        assert!(!r.passed());
    }
}
