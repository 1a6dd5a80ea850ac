//! Norms, energies and runtime checks of the scheme's estimates.
//!
//! Two norm conventions appear here and each field says which it uses:
//!
//! * raw vector norms `||u||^2 = sum |u_i|^2`, used by every per-step
//!   inequality and by the stabilization threshold;
//! * `dx`-scaled norms approximating continuum `L^2` integrals, used by the
//!   Lyapunov functional and the dissipative bound.

use crate::control::{sine_mode, ModeBasis};
use crate::discretization::{coefficients, laplacian, system_matrices, TridiagonalOperator};
use crate::error::{Error, Result};
use crate::linalg::{norm2, LinearSolver, LowRankUpdatedOperator};
use crate::model::{Grid1D, Parameters1D, State1D};

/// Relative tolerance for the two growth estimates.
pub const GROWTH_TOL: f64 = 1e-10;
/// Relative tolerance for the two energy-type inequalities.
pub const ENERGY_TOL: f64 = 1e-8;
/// Relative tolerance for the step-to-step Lyapunov check.
pub const LYAPUNOV_TOL: f64 = 1e-6;
/// Default relative slack on the dissipative bound.
pub const DISSIPATIVE_SLACK: f64 = 0.05;

/// Per-step diagnostics.
///
/// Residual fields are `(left - right) / scale` of the corresponding
/// inequality, so a value `<= GROWTH_TOL` (or `ENERGY_TOL`) means the
/// inequality held. Without a previous state they are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub time: f64,
    /// `sqrt(dx) ||A||`, approximates the continuum L2 norm.
    pub l2_a: f64,
    /// `sqrt(dx) ||phi||`.
    pub l2_phi: f64,
    /// Unscaled `||A||`.
    pub raw_l2_a: f64,
    /// Unscaled `||phi||`.
    pub raw_l2_phi: f64,
    /// `dx A^T Delta_h A`, approximates `||d_x A||^2`.
    pub h1_a: f64,
    /// `dx phi^T Delta_h phi`.
    pub h1_phi: f64,
    /// `max_i |A_i|`.
    pub max_abs_a: f64,
    /// Lyapunov functional with dx-scaled quadrature.
    pub lyapunov: f64,
    /// Scaled by `max(1, ||A^k||^2)`.
    pub growth_residual_a: f64,
    /// Scaled by `max(1, ||phi^k||^2)`.
    pub growth_residual_phi: f64,
    /// Scaled by `max(1, sum of |terms|)`.
    pub energy_residual_a: f64,
    pub energy_residual_phi: f64,
    pub control_energy: f64,
}

impl DiagnosticsRecord {
    pub fn inequalities_hold(&self) -> bool {
        self.growth_residual_a <= GROWTH_TOL
            && self.growth_residual_phi <= GROWTH_TOL
            && self.energy_residual_a <= ENERGY_TOL
            && self.energy_residual_phi <= ENERGY_TOL
    }
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn weighted_sq(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b * b).sum()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Quadratic form of `Delta_h + mu W W^T` (the bare Laplacian without feedback).
struct Stiffness<'a> {
    lap: TridiagonalOperator,
    feedback: Option<&'a ModeBasis>,
}

impl Stiffness<'_> {
    fn form(&self, x: &[f64]) -> f64 {
        let mut q = self.lap.quadratic_form(x);
        if let Some(b) = self.feedback {
            if b.mu != 0.0 {
                q += b.mu * b.project(x).iter().map(|c| c * c).sum::<f64>();
            }
        }
        q
    }
}

/// The Lyapunov functional
/// `||d_x A||^2 + D1 ||d_x phi||^2 + 1/2 ||A||_4^4 + (phi^2, |A|^2) - ||A||^2 + h ||phi||^2`
/// with gradients from `dx u^T Delta_h u` and node sums times `dx`.
pub fn lyapunov(state: &State1D, params: &Parameters1D, grid: &Grid1D) -> f64 {
    let lap = laplacian(grid);
    let (re, im) = (state.a_re(), state.a_im());
    let phi = state.phi_interior();
    let grad_a = lap.quadratic_form(&re) + lap.quadratic_form(&im);
    let grad_phi = lap.quadratic_form(phi);
    let mut quartic = 0.0;
    let mut coupling = 0.0;
    let mut a_sq = 0.0;
    let mut phi_sq = 0.0;
    for (z, p) in state.a.iter().zip(&state.phi) {
        let m = z.norm_sqr();
        quartic += m * m;
        coupling += p * p * m;
        a_sq += m;
        phi_sq += p * p;
    }
    grid.dx
        * (grad_a + params.d1 * grad_phi + 0.5 * quartic + coupling - a_sq + params.h * phi_sq)
}

struct Residuals {
    growth_a: f64,
    growth_phi: f64,
    energy_a: f64,
    energy_phi: f64,
}

fn residuals(
    prev: &State1D,
    next: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    feedback: Option<&ModeBasis>,
) -> Residuals {
    let stiff = Stiffness {
        lap: laplacian(grid),
        feedback,
    };
    let plain = laplacian(grid);
    let ck = coefficients(prev, params);
    let cn = coefficients(next, params);
    let c = grid.dt / params.tau;
    let dt = grid.dt;

    // Amplitude: both real components share every real operator.
    let (a_re, a_im) = (prev.a_re(), prev.a_im());
    let (b_re, b_im) = (next.a_re(), next.a_im());
    let parts = [(&a_re, &b_re), (&a_im, &b_im)];
    let norm_a = sum_sq(&a_re) + sum_sq(&a_im);
    let norm_b = sum_sq(&b_re) + sum_sq(&b_im);
    let q_a: f64 = parts.iter().map(|(a, _)| stiff.form(a)).sum();
    let q_b: f64 = parts.iter().map(|(_, b)| stiff.form(b)).sum();
    let hp_b: f64 = parts.iter().map(|(_, b)| weighted_sq(&ck.h_plus, b)).sum();
    let hm_sup = sup(&ck.h_minus);

    let left = 0.5 * (1.0 - c * hm_sup) * norm_b + c * q_b + c * hp_b;
    let right = 0.5 * (1.0 + c * hm_sup) * norm_a;
    let growth_a = (left - right) / norm_a.max(1.0);

    let hk = ck.h_net();
    let hn = cn.h_net();
    let dh = hk.iter().zip(&hn).map(|(x, y)| y - x).collect::<Vec<_>>();
    let diff_sq: f64 = parts
        .iter()
        .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (y - x) * (y - x)).sum::<f64>())
        .sum();
    let hn_b: f64 = parts.iter().map(|(_, b)| weighted_sq(&hn, b)).sum();
    let hk_a: f64 = parts.iter().map(|(a, _)| weighted_sq(&hk, a)).sum();
    let terms = [
        params.tau / dt * diff_sq,
        0.5 * q_b,
        0.5 * hn_b,
        0.5 * norm_b * sup(&dh),
        0.5 * q_a,
        0.5 * hk_a,
    ];
    let left = terms[0] + terms[1] + terms[2];
    let right = terms[3] + terms[4] + terms[5];
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(1.0);
    let energy_a = (left - right) / scale;

    // Director.
    let pa = prev.phi_interior();
    let pb = next.phi_interior();
    let norm_pa = sum_sq(pa);
    let norm_pb = sum_sq(pb);
    let gm_sup = sup(&ck.g_minus);
    let left = 0.5 * (1.0 - dt * gm_sup) * norm_pb
        + dt * params.d1 * plain.quadratic_form(pb)
        + dt * weighted_sq(&ck.g_plus, pb);
    let right = 0.5 * (1.0 + dt * gm_sup) * norm_pa;
    let growth_phi = (left - right) / norm_pa.max(1.0);

    let gk = ck.g_net();
    let gn = cn.g_net();
    let dg = gk.iter().zip(&gn).map(|(x, y)| y - x).collect::<Vec<_>>();
    let diff_sq: f64 = pa.iter().zip(pb).map(|(x, y)| (y - x) * (y - x)).sum();
    let terms = [
        diff_sq / dt,
        0.5 * params.d1 * plain.quadratic_form(pb),
        0.5 * weighted_sq(&gn, pb),
        0.5 * norm_pb * sup(&dg),
        0.5 * params.d1 * plain.quadratic_form(pa),
        0.5 * weighted_sq(&gk, pa),
    ];
    let left = terms[0] + terms[1] + terms[2];
    let right = terms[3] + terms[4] + terms[5];
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(1.0);
    let energy_phi = (left - right) / scale;

    Residuals {
        growth_a,
        growth_phi,
        energy_a,
        energy_phi,
    }
}

/// Diagnostics of `state`; residuals need the state `prev` one step earlier.
///
/// `feedback` is the zero-state basis when the step was stabilized: its
/// quadratic form `mu ||W^T u||^2` then joins `u^T Delta_h u` in the amplitude
/// inequalities, which is the form they take for the stabilized scheme.
pub fn record(
    state: &State1D,
    prev: Option<&State1D>,
    params: &Parameters1D,
    grid: &Grid1D,
    control_energy: f64,
    feedback: Option<&ModeBasis>,
) -> DiagnosticsRecord {
    let lap = laplacian(grid);
    let (re, im) = (state.a_re(), state.a_im());
    let a_sq = sum_sq(&re) + sum_sq(&im);
    let phi_sq = sum_sq(state.phi_interior());
    let res = prev.map(|p| residuals(p, state, params, grid, feedback));
    DiagnosticsRecord {
        step: state.step,
        time: state.time,
        l2_a: (grid.dx * a_sq).sqrt(),
        l2_phi: (grid.dx * phi_sq).sqrt(),
        raw_l2_a: a_sq.sqrt(),
        raw_l2_phi: phi_sq.sqrt(),
        h1_a: grid.dx * (lap.quadratic_form(&re) + lap.quadratic_form(&im)),
        h1_phi: grid.dx * lap.quadratic_form(state.phi_interior()),
        max_abs_a: state.a.iter().fold(0.0f64, |m, z| m.max(z.norm())),
        lyapunov: lyapunov(state, params, grid),
        growth_residual_a: res.as_ref().map_or(0.0, |r| r.growth_a),
        growth_residual_phi: res.as_ref().map_or(0.0, |r| r.growth_phi),
        energy_residual_a: res.as_ref().map_or(0.0, |r| r.energy_a),
        energy_residual_phi: res.as_ref().map_or(0.0, |r| r.energy_phi),
        control_energy,
    }
}

/// Per-mode amplification of the amplitude step.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingRow {
    pub j: usize,
    pub lambda: f64,
    /// `(1 + dt/tau ||H_-||_inf) / (1 + dt/tau lambda_j)`
    pub bound_free: f64,
    /// Same with `+ (mu dt / tau) ||W^T V_j||^2` in the denominator.
    pub bound_stabilized: f64,
    /// `||M^{-1} L V_j||` with the feedback matrix when a basis is given.
    pub observed_ratio: f64,
    /// `||M_A^{-1} L_A V_j||` without feedback.
    pub observed_free: f64,
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DampingReport {
    pub rows: Vec<DampingRow>,
}

pub fn damping_report(
    state: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    basis: Option<&ModeBasis>,
) -> Result<DampingReport> {
    state.validate(grid)?;
    let coeffs = coefficients(state, params);
    let mats = system_matrices(&laplacian(grid), &coeffs, params, grid);
    let c = grid.dt / params.tau;
    let hm_sup = sup(&coeffs.h_minus);
    let empty: Vec<Vec<f64>> = Vec::new();
    let (factor, mu) = match basis {
        Some(b) => (&b.vectors[..], b.mu),
        None => (&empty[..], 0.0),
    };
    let op = LowRankUpdatedOperator::new(mats.m_a.clone(), factor, mu * c)?;
    let solver = LinearSolver::Direct;

    let mut rows = Vec::with_capacity(grid.interior());
    for j in 1..=grid.interior() {
        let v = sine_mode(grid, j);
        let lambda = crate::control::discrete_eigenvalue(grid, j);
        let rhs: Vec<f64> = mats.l_a_diag.iter().zip(&v).map(|(l, x)| l * x).collect();
        let (free, _) = solver.solve_tridiagonal(&mats.m_a, &rhs)?;
        let observed_free = norm2(&free);
        let proj: f64 = basis.map_or(0.0, |b| b.project(&v).iter().map(|p| p * p).sum());
        let observed_ratio = if op.scale == 0.0 || op.rank() == 0 {
            observed_free
        } else {
            norm2(&solver.solve_low_rank(&op, &rhs)?.0)
        };
        rows.push(DampingRow {
            j,
            lambda,
            bound_free: (1.0 + c * hm_sup) / (1.0 + c * lambda),
            bound_stabilized: (1.0 + c * hm_sup) / (1.0 + c * lambda + mu * c * proj),
            observed_ratio,
            observed_free,
            included: basis.is_some_and(|b| j <= b.k_modes()),
        });
    }
    Ok(DampingReport { rows })
}

/// Outcome of checking `tau ||A||^2 + ||phi||^2 <= e^{-alpha t} (...)_0 + L / alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct DissipativeReport {
    pub alpha: f64,
    pub slack: f64,
    pub checked: usize,
    /// `(step, lhs, rhs)` of the first record exceeding `(1 + slack) rhs`.
    pub first_violation: Option<(u64, f64, f64)>,
    /// `max lhs / rhs` over the trace.
    pub max_utilization: f64,
    /// Every left side already stays below `L / alpha`.
    pub non_binding: bool,
}

impl DissipativeReport {
    pub fn satisfied(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// `min{2 pi^2 / (tau L^2) + 2 / tau, 2 pi^2 D1 / L^2}`.
pub fn dissipation_rate(params: &Parameters1D) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let l2 = params.length * params.length;
    (2.0 * pi2 / (params.tau * l2) + 2.0 / params.tau).min(2.0 * pi2 * params.d1 / l2)
}

/// Checks the dissipative bound along a free-run trace whose first record is
/// the initial state. Norms are the dx-scaled ones.
pub fn verify_dissipative_bound(
    trace: &[DiagnosticsRecord],
    params: &Parameters1D,
    slack: f64,
) -> Result<DissipativeReport> {
    let first = trace
        .first()
        .ok_or_else(|| Error::invalid("dissipative bound needs a non-empty trace"))?;
    let alpha = dissipation_rate(params);
    let energy = |r: &DiagnosticsRecord| params.tau * r.l2_a * r.l2_a + r.l2_phi * r.l2_phi;
    let e0 = energy(first);
    let floor = params.length / alpha;
    let mut first_violation = None;
    let mut max_utilization = 0.0f64;
    let mut max_lhs = 0.0f64;
    for r in trace {
        let lhs = energy(r);
        let rhs = (-alpha * (r.time - first.time)).exp() * e0 + floor;
        max_utilization = max_utilization.max(lhs / rhs);
        max_lhs = max_lhs.max(lhs);
        if first_violation.is_none() && lhs > (1.0 + slack) * rhs {
            first_violation = Some((r.step, lhs, rhs));
        }
    }
    Ok(DissipativeReport {
        alpha,
        slack,
        checked: trace.len(),
        first_violation,
        max_utilization,
        non_binding: max_lhs <= floor,
    })
}

/// Empirical bound on the gradient norms: the largest `h1_a` or `h1_phi` seen.
pub fn estimate_m0(trace: &[DiagnosticsRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot estimate M0 from an empty trace"));
    }
    Ok(trace
        .iter()
        .map(|r| r.h1_a.max(r.h1_phi))
        .fold(0.0f64, f64::max))
}

/// Steps `k` at which `Lambda(t_{k+1}) > Lambda(t_k) + rel_tol (1 + |Lambda(t_k)|)`,
/// with the two values.
pub fn lyapunov_increases(trace: &[DiagnosticsRecord], rel_tol: f64) -> Vec<(u64, f64, f64)> {
    trace
        .windows(2)
        .filter(|w| w[1].lyapunov > w[0].lyapunov + rel_tol * (1.0 + w[0].lyapunov.abs()))
        .map(|w| (w[0].step, w[0].lyapunov, w[1].lyapunov))
        .collect()
}

/// Medians of `|A_i|` and `|phi_i|` over the middle half of the nodes.
pub fn plateau_statistics(state: &State1D) -> (f64, f64) {
    let n = state.n();
    let (lo, hi) = (n / 4, n - n / 4);
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m == 0 {
            0.0
        } else if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };
    (
        median(state.a[lo..=hi].iter().map(|z| z.norm()).collect()),
        median(state.phi[lo..=hi].iter().map(|p| p.abs()).collect()),
    )
}

/// Least-squares slope of `ln(values)` against `times`; `None` when fewer
/// than two positive samples are available.
pub fn log_linear_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::build_mode_basis;
    use crate::model::{initial_condition, InitialCondition};
    use crate::stepper::{step_free, step_stabilized};
    use num_complex::Complex64;

    #[test]
    fn zero_state_record() {
        let p = Parameters1D::new(1.0, 1.0, 0.1, 10.0).unwrap();
        let g = Grid1D::new(32, 10.0, 0.1).unwrap();
        let z = State1D::zeros(&g);
        let r = record(&z, Some(&z), &p, &g, 0.0, None);
        assert_eq!(r.l2_a, 0.0);
        assert_eq!(r.l2_phi, 0.0);
        assert_eq!(r.h1_a, 0.0);
        assert_eq!(r.lyapunov, 0.0);
        assert!(r.growth_residual_a <= 0.0 && r.growth_residual_phi <= 0.0);
        assert!(r.energy_residual_a <= 0.0 && r.energy_residual_phi <= 0.0);
    }

    #[test]
    fn sine_profile_l2_norm() {
        let length = 7.0;
        let c = 1.3;
        let p = Parameters1D::new(1.0, 1.0, 0.1, length).unwrap();
        let g = Grid1D::new(4096, length, 0.1).unwrap();
        let mut s = State1D::zeros(&g);
        for i in 1..4096 {
            s.a[i] = Complex64::new(c * (std::f64::consts::PI * g.x(i) / length).sin(), 0.0);
        }
        let r = record(&s, None, &p, &g, 0.0, None);
        let want = 0.5 * c * c * length;
        assert!((r.l2_a * r.l2_a - want).abs() <= 1e-4 * want);
    }

    #[test]
    fn residuals_hold_along_free_and_stabilized_steps() {
        let p = Parameters1D::new(0.7, 1.3, 0.2, 20.0).unwrap();
        let g = Grid1D::new(128, 20.0, 0.05).unwrap();
        let mut s = initial_condition(&InitialCondition::Oscillatory { seed: 12, amplitude: 1.5 }, &g).unwrap();
        for _ in 0..40 {
            let next = step_free(&s, &p, &g, &LinearSolver::Direct).unwrap().state;
            let r = record(&next, Some(&s), &p, &g, 0.0, None);
            assert!(r.inequalities_hold(), "{r:?}");
            s = next;
        }
        let basis = build_mode_basis(&g, 30, 4.0).unwrap();
        for _ in 0..40 {
            let out = step_stabilized(&s, &p, &g, &basis, &LinearSolver::Direct).unwrap();
            let r = record(&out.state, Some(&s), &p, &g, out.control_energy, Some(&basis));
            assert!(r.inequalities_hold(), "{r:?}");
            s = out.state;
        }
    }

    #[test]
    fn damping_is_tight_at_zero_state() {
        let p = Parameters1D::new(1.0, 1.0, 0.1, 30.0).unwrap();
        let g = Grid1D::new(64, 30.0, 0.2).unwrap();
        let rep = damping_report(&State1D::zeros(&g), &p, &g, None).unwrap();
        assert_eq!(rep.rows.len(), 63);
        for row in &rep.rows {
            assert!((row.observed_ratio - row.bound_free).abs() <= 1e-10, "{row:?}");
            assert_eq!(row.bound_stabilized, row.bound_free);
        }
    }

    #[test]
    fn damping_with_feedback() {
        let p = Parameters1D::new(1.0, 1.0, 0.1, 30.0).unwrap();
        let g = Grid1D::new(64, 30.0, 0.2).unwrap();
        let s = initial_condition(&InitialCondition::Oscillatory { seed: 3, amplitude: 0.5 }, &g).unwrap();
        let basis = build_mode_basis(&g, 12, 2.0).unwrap();
        let rep = damping_report(&s, &p, &g, Some(&basis)).unwrap();
        for row in &rep.rows {
            if row.included {
                assert!(row.bound_stabilized < row.bound_free);
                assert!(row.observed_ratio <= row.bound_stabilized + 1e-10, "{row:?}");
            } else {
                assert!((row.bound_stabilized - row.bound_free).abs() <= 1e-12 * row.bound_free);
            }
        }
    }

    #[test]
    fn dissipative_bound_zero_data() {
        let p = Parameters1D::new(1.0, 1.0, 0.0, 1.0).unwrap();
        let g = Grid1D::new(16, 1.0, 0.01).unwrap();
        let z = State1D::zeros(&g);
        let trace = vec![record(&z, None, &p, &g, 0.0, None)];
        let rep = verify_dissipative_bound(&trace, &p, DISSIPATIVE_SLACK).unwrap();
        assert!(rep.satisfied());
        assert!(rep.non_binding);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((rep.alpha - 2.0 * pi2).abs() < 1e-12);
        assert!(verify_dissipative_bound(&[], &p, 0.05).is_err());
    }

    #[test]
    fn m0_estimate() {
        assert!(estimate_m0(&[]).is_err());
        let p = Parameters1D::new(1.0, 1.0, 0.0, 1.0).unwrap();
        let g = Grid1D::new(16, 1.0, 0.01).unwrap();
        let z = State1D::zeros(&g);
        let mut r = record(&z, None, &p, &g, 0.0, None);
        assert_eq!(estimate_m0(&[r.clone()]).unwrap(), 0.0);
        r.h1_a = 2.0;
        r.h1_phi = 3.0;
        assert_eq!(estimate_m0(&[r]).unwrap(), 3.0);
    }

    #[test]
    fn slope_of_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        assert!((log_linear_slope(&t, &v).unwrap() + 0.7).abs() < 1e-12);
        assert!(log_linear_slope(&[1.0], &[1.0]).is_none());
    }

    fn gauss_legendre_5(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let nodes = [
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let hw = 0.5 * (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let mid = a + (2 * k + 1) as f64 * hw;
                nodes.iter().map(|(x, w)| w * f(mid + hw * x)).sum::<f64>() * hw
            })
            .sum()
    }

    #[test]
    fn lyapunov_matches_quadrature_on_plateau_profile() {
        let (h, d1, length, w) = (0.1, 1.3, 20.0, 1.0);
        let p = Parameters1D::new(1.0, d1, h, length).unwrap();
        let g = Grid1D::new(1 << 16, length, 0.1).unwrap();
        let (a, b) = (h.sqrt(), (1.0 - h).sqrt());
        let s = |x: f64| (x / w).tanh() * ((length - x) / w).tanh();
        let ds = |x: f64| {
            let (t1, t2) = ((x / w).tanh(), ((length - x) / w).tanh());
            ((1.0 - t1 * t1) * t2 - t1 * (1.0 - t2 * t2)) / w
        };
        let density = |x: f64| {
            let (u, du) = (s(x), ds(x));
            let (am, pm) = (a * a * u * u, b * b * u * u);
            a * a * du * du + d1 * b * b * du * du + 0.5 * am * am + pm * am - am + h * pm
        };
        let oracle = gauss_legendre_5(density, 0.0, length, 4000);
        let mut st = State1D::zeros(&g);
        for i in 1..g.n {
            let u = s(g.x(i));
            st.a[i] = Complex64::new(0.6 * a * u, 0.8 * a * u);
            st.phi[i] = b * u;
        }
        let got = lyapunov(&st, &p, &g);
        assert!((got - oracle).abs() <= 1e-6 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn plateau_of_uniform_profile() {
        let g = Grid1D::new(40, 10.0, 0.1).unwrap();
        let mut s = State1D::zeros(&g);
        for i in 1..40 {
            s.a[i] = Complex64::new(0.0, 0.5);
            s.phi[i] = if i < 20 { -0.9 } else { 0.9 };
        }
        let (a, p) = plateau_statistics(&s);
        assert_eq!(a, 0.5);
        assert_eq!(p, 0.9);
    }
}
