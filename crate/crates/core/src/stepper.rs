//! One time step of the semi-implicit scheme: free, zero-state stabilized,
//! and reference tracking.
//!
//! Each step lags the nonlinear coefficients to the current state, builds
//! `M_A, L_A, M_phi, L_phi` and solves
//!
//! ```text
//! (M_A + (mu dt / tau) W W^T) A^{k+1} = L_A A^k      (Re and Im separately)
//!  M_phi                      phi^{k+1} = L_phi phi^k
//! ```
//!
//! with `mu = 0` for the free step. Feedback is implicit. The tracking step
//! is this scheme's own discretization of the controlled system: it solves
//! for the deviation from the already advanced reference, so that a
//! controlled state equal to the reference stays equal to it.

use crate::control::ModeBasis;
use crate::discretization::{coefficients, laplacian, system_matrices, SystemMatrices};
use crate::error::{Error, Result};
use crate::linalg::{LinearSolver, LowRankUpdatedOperator};
use crate::model::{Grid1D, Parameters1D, State1D};

/// Result of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: State1D,
    /// CG iterations for `(Re A, Im A, phi)`; zero for direct solves.
    pub solver_iterations: [usize; 3],
    /// Feedback energy `mu sum_j |(u^{k+1}, w_j)|^2` actually applied.
    pub control_energy: f64,
}

fn matrices(state: &State1D, params: &Parameters1D, grid: &Grid1D) -> Result<SystemMatrices> {
    state.validate(grid)?;
    let coeffs = coefficients(state, params);
    Ok(system_matrices(&laplacian(grid), &coeffs, params, grid))
}

fn scale_by(diag: &[f64], x: &[f64]) -> Vec<f64> {
    diag.iter().zip(x).map(|(d, v)| d * v).collect()
}

pub fn step_free(
    state: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    solver: &LinearSolver,
) -> Result<StepOutcome> {
    let run = || -> Result<StepOutcome> {
        let m = matrices(state, params, grid)?;
        let (re, it_re) = solver.solve_tridiagonal(&m.m_a, &scale_by(&m.l_a_diag, &state.a_re()))?;
        let (im, it_im) = solver.solve_tridiagonal(&m.m_a, &scale_by(&m.l_a_diag, &state.a_im()))?;
        let (phi, it_phi) =
            solver.solve_tridiagonal(&m.m_phi, &scale_by(&m.l_phi_diag, state.phi_interior()))?;
        Ok(StepOutcome {
            state: State1D::from_interior(&re, &im, &phi, state.step + 1, grid.dt),
            solver_iterations: [it_re, it_im, it_phi],
            control_energy: 0.0,
        })
    };
    run().map_err(|e| e.at_step(state.step))
}

fn check_basis(basis: &ModeBasis, grid: &Grid1D) -> Result<()> {
    if basis.vectors.iter().any(|v| v.len() != grid.interior()) {
        return Err(Error::Dimension(format!(
            "mode basis does not match a grid with {} interior nodes",
            grid.interior()
        )));
    }
    Ok(())
}

/// Free step with implicit feedback `-(mu dt / tau) W W^T A^{k+1}` on the amplitude.
/// The director equation carries no feedback.
pub fn step_stabilized(
    state: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    basis: &ModeBasis,
    solver: &LinearSolver,
) -> Result<StepOutcome> {
    let run = || -> Result<StepOutcome> {
        check_basis(basis, grid)?;
        let m = matrices(state, params, grid)?;
        let scale = basis.mu * grid.dt / params.tau;
        let op = LowRankUpdatedOperator::new(m.m_a, &basis.vectors, scale)?;
        let (re, it_re) = solver.solve_low_rank(&op, &scale_by(&m.l_a_diag, &state.a_re()))?;
        let (im, it_im) = solver.solve_low_rank(&op, &scale_by(&m.l_a_diag, &state.a_im()))?;
        let (phi, it_phi) =
            solver.solve_tridiagonal(&m.m_phi, &scale_by(&m.l_phi_diag, state.phi_interior()))?;
        let control_energy = if scale == 0.0 { 0.0 } else { basis.control_energy(&re, &im) };
        Ok(StepOutcome {
            state: State1D::from_interior(&re, &im, &phi, state.step + 1, grid.dt),
            solver_iterations: [it_re, it_im, it_phi],
            control_energy,
        })
    };
    run().map_err(|e| e.at_step(state.step))
}

/// Mode bases for the two tracking feedbacks: gain `mu1` on the first `n1`
/// modes of the amplitude error, `mu2` on the first `n2` modes of the
/// director error.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingFeedback {
    pub amplitude: ModeBasis,
    pub director: ModeBasis,
}

impl TrackingFeedback {
    pub fn new(grid: &Grid1D, mu1: f64, mu2: f64, n1: usize, n2: usize) -> Result<Self> {
        Ok(Self {
            amplitude: crate::control::build_mode_basis(grid, n1, mu1)?,
            director: crate::control::build_mode_basis(grid, n2, mu2)?,
        })
    }
}

/// Advances the controlled pair one step toward `reference_next`, the
/// reference solution already advanced to the target time.
///
/// Solves for the deviation `e = u^{k+1} - u_ref^{k+1}`:
///
/// ```text
/// (M_A~ + (mu1 dt / tau) W1 W1^T) e_A   = L_A~ A~^k     - M_A~ A_ref^{k+1}
/// (M_phi~ + mu2 dt W2 W2^T)       e_phi = L_phi~ phi~^k - M_phi~ phi_ref^{k+1}
/// ```
///
/// where the matrices are lagged at the controlled state.
pub fn step_tracking(
    controlled: &State1D,
    reference_next: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    feedback: &TrackingFeedback,
    solver: &LinearSolver,
) -> Result<StepOutcome> {
    let run = || -> Result<StepOutcome> {
        reference_next.validate(grid)?;
        if reference_next.step != controlled.step + 1 {
            return Err(Error::Dimension(format!(
                "reference is at step {} but the controlled state is at step {}",
                reference_next.step, controlled.step
            )));
        }
        check_basis(&feedback.amplitude, grid)?;
        check_basis(&feedback.director, grid)?;
        let m = matrices(controlled, params, grid)?;

        let defect = |mat: &crate::discretization::TridiagonalOperator, l: &[f64], cur: &[f64], next: &[f64]| {
            let lhs = mat.apply(next);
            l.iter()
                .zip(cur)
                .zip(&lhs)
                .map(|((d, c), r)| d * c - r)
                .collect::<Vec<f64>>()
        };
        let rhs_re = defect(&m.m_a, &m.l_a_diag, &controlled.a_re(), &reference_next.a_re());
        let rhs_im = defect(&m.m_a, &m.l_a_diag, &controlled.a_im(), &reference_next.a_im());
        let rhs_phi = defect(
            &m.m_phi,
            &m.l_phi_diag,
            controlled.phi_interior(),
            reference_next.phi_interior(),
        );

        let scale_a = feedback.amplitude.mu * grid.dt / params.tau;
        let op_a = LowRankUpdatedOperator::new(m.m_a, &feedback.amplitude.vectors, scale_a)?;
        let (e_re, it_re) = solver.solve_low_rank(&op_a, &rhs_re)?;
        let (e_im, it_im) = solver.solve_low_rank(&op_a, &rhs_im)?;

        let scale_p = feedback.director.mu * grid.dt;
        let op_p = LowRankUpdatedOperator::new(m.m_phi, &feedback.director.vectors, scale_p)?;
        let (e_phi, it_phi) = solver.solve_low_rank(&op_p, &rhs_phi)?;

        let mut control_energy = 0.0;
        if scale_a != 0.0 {
            control_energy += feedback.amplitude.control_energy(&e_re, &e_im);
        }
        if scale_p != 0.0 {
            control_energy += feedback.director.control_energy(&e_phi, &[]);
        }

        let add = |r: &[f64], e: &[f64]| r.iter().zip(e).map(|(a, b)| a + b).collect::<Vec<f64>>();
        let re = add(&reference_next.a_re(), &e_re);
        let im = add(&reference_next.a_im(), &e_im);
        let phi = add(reference_next.phi_interior(), &e_phi);
        Ok(StepOutcome {
            state: State1D::from_interior(&re, &im, &phi, controlled.step + 1, grid.dt),
            solver_iterations: [it_re, it_im, it_phi],
            control_energy,
        })
    };
    run().map_err(|e| e.at_step(controlled.step))
}
