//! Multi-step drivers: free or stabilized trajectories and reference
//! tracking, with per-step diagnostics and invariant bookkeeping.

use crate::control::ModeBasis;
use crate::diagnostics::{self, DiagnosticsRecord, LYAPUNOV_TOL};
use crate::error::{Error, Result};
use crate::linalg::LinearSolver;
use crate::model::{Grid1D, Parameters1D, State1D};
use crate::stepper::{step_free, step_stabilized, step_tracking, TrackingFeedback};

/// Below this raw norm the amplitude is no longer required to decrease.
pub const MONOTONICITY_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    Free,
    Stabilized(&'a ModeBasis),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub steps: u64,
    /// Keep every `stride`-th record in the returned trajectory.
    pub diagnostics_stride: u64,
    /// Stop early once both raw norms fall below this value.
    pub stop_below: Option<f64>,
}

impl RunOptions {
    pub fn new(steps: u64) -> Self {
        Self {
            steps,
            diagnostics_stride: 1,
            stop_below: None,
        }
    }
}

/// What a run produced and which invariants it broke.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub final_state: State1D,
    /// Strided records; always includes the initial and final states.
    pub records: Vec<DiagnosticsRecord>,
    pub steps_taken: u64,
    /// Steps whose growth or energy residual exceeded its tolerance.
    pub residual_violations: Vec<u64>,
    /// Largest normalized residuals `[growth A, growth phi, energy A, energy phi]`.
    pub max_residuals: [f64; 4],
    /// Steps `k` where the Lyapunov functional rose from `k` to `k + 1`.
    pub lyapunov_increases: Vec<(u64, f64, f64)>,
    /// Steps `k` where `||A^{k+1}|| >= ||A^k||` while `||A^k|| >= MONOTONICITY_FLOOR`.
    pub amplitude_increases: Vec<u64>,
    /// First step with raw `||A||` below 1e-6, and the same for `phi`.
    pub first_below_a: Option<u64>,
    pub first_below_phi: Option<u64>,
    pub total_solver_iterations: u64,
}

pub const DECAY_TARGET: f64 = 1e-6;

fn keep(step: u64, stride: u64) -> bool {
    step.is_multiple_of(stride)
}

/// Runs `opts.steps` steps from `initial`, calling `observer` with every
/// state and its record (the initial state included) before moving on.
pub fn run(
    initial: State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    control: Control<'_>,
    solver: &LinearSolver,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&State1D, &DiagnosticsRecord) -> Result<()>,
) -> Result<Trajectory> {
    if opts.diagnostics_stride == 0 {
        return Err(Error::invalid("diagnostics stride must be positive"));
    }
    initial.validate(grid)?;
    grid.check_against(params)?;
    let basis = match control {
        Control::Free => None,
        Control::Stabilized(b) => Some(b),
    };

    let first = diagnostics::record(&initial, None, params, grid, 0.0, basis);
    observer(&initial, &first)?;
    let mut traj = Trajectory {
        final_state: initial.clone(),
        records: vec![first.clone()],
        steps_taken: 0,
        residual_violations: Vec::new(),
        max_residuals: [f64::NEG_INFINITY; 4],
        lyapunov_increases: Vec::new(),
        amplitude_increases: Vec::new(),
        first_below_a: None,
        first_below_phi: None,
        total_solver_iterations: 0,
    };
    let note_below = |traj: &mut Trajectory, r: &DiagnosticsRecord| {
        if traj.first_below_a.is_none() && r.raw_l2_a < DECAY_TARGET {
            traj.first_below_a = Some(r.step);
        }
        if traj.first_below_phi.is_none() && r.raw_l2_phi < DECAY_TARGET {
            traj.first_below_phi = Some(r.step);
        }
    };
    note_below(&mut traj, &first);

    let mut state = initial;
    let mut prev_record = first;
    for _ in 0..opts.steps {
        if let Some(limit) = opts.stop_below {
            if prev_record.raw_l2_a < limit && prev_record.raw_l2_phi < limit {
                break;
            }
        }
        let out = match basis {
            None => step_free(&state, params, grid, solver)?,
            Some(b) => step_stabilized(&state, params, grid, b, solver)?,
        };
        traj.total_solver_iterations += out.solver_iterations.iter().sum::<usize>() as u64;
        let rec = diagnostics::record(&out.state, Some(&state), params, grid, out.control_energy, basis);
        let res = [
            rec.growth_residual_a,
            rec.growth_residual_phi,
            rec.energy_residual_a,
            rec.energy_residual_phi,
        ];
        for (m, r) in traj.max_residuals.iter_mut().zip(res) {
            *m = m.max(r);
        }
        if !rec.inequalities_hold() {
            traj.residual_violations.push(state.step);
        }
        let lt = LYAPUNOV_TOL * (1.0 + prev_record.lyapunov.abs());
        if rec.lyapunov > prev_record.lyapunov + lt {
            traj.lyapunov_increases
                .push((state.step, prev_record.lyapunov, rec.lyapunov));
        }
        if prev_record.raw_l2_a >= MONOTONICITY_FLOOR && rec.raw_l2_a >= prev_record.raw_l2_a {
            traj.amplitude_increases.push(state.step);
        }
        note_below(&mut traj, &rec);
        observer(&out.state, &rec)?;
        if keep(rec.step, opts.diagnostics_stride) {
            traj.records.push(rec.clone());
        }
        traj.steps_taken += 1;
        state = out.state;
        prev_record = rec;
    }
    if traj.records.last().map(|r| r.step) != Some(prev_record.step) {
        traj.records.push(prev_record);
    }
    traj.final_state = state;
    Ok(traj)
}

/// Error between the controlled and reference states at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingRecord {
    pub step: u64,
    pub time: f64,
    /// `sqrt(dx) ||A~ - A||`
    pub err_a: f64,
    /// `sqrt(dx) ||phi~ - phi||`
    pub err_phi: f64,
    /// `tau err_a^2 + err_phi^2`
    pub error_functional: f64,
    pub control_energy: f64,
}

pub fn tracking_record(
    controlled: &State1D,
    reference: &State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    control_energy: f64,
) -> TrackingRecord {
    let ea: f64 = controlled
        .a
        .iter()
        .zip(&reference.a)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let ep: f64 = controlled
        .phi
        .iter()
        .zip(&reference.phi)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let (ea, ep) = (grid.dx * ea, grid.dx * ep);
    TrackingRecord {
        step: controlled.step,
        time: controlled.time,
        err_a: ea.sqrt(),
        err_phi: ep.sqrt(),
        error_functional: params.tau * ea + ep,
        control_energy,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingRun {
    pub reference: State1D,
    pub controlled: State1D,
    /// Diagnostics of the free reference trajectory, strided.
    pub reference_records: Vec<DiagnosticsRecord>,
    pub reference_residual_violations: Vec<u64>,
    /// One record per step, initial state included.
    pub errors: Vec<TrackingRecord>,
}

/// Advances the reference (free) and the controlled state in lockstep.
#[allow(clippy::too_many_arguments)]
pub fn run_tracking(
    reference: State1D,
    controlled: State1D,
    params: &Parameters1D,
    grid: &Grid1D,
    feedback: &TrackingFeedback,
    solver: &LinearSolver,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&State1D, &DiagnosticsRecord, &State1D, &TrackingRecord) -> Result<()>,
) -> Result<TrackingRun> {
    if opts.diagnostics_stride == 0 {
        return Err(Error::invalid("diagnostics stride must be positive"));
    }
    grid.check_against(params)?;
    reference.validate(grid)?;
    controlled.validate(grid)?;
    if reference.step != controlled.step {
        return Err(Error::invalid(format!(
            "reference is at step {} but the controlled state at step {}",
            reference.step, controlled.step
        )));
    }
    let rec = diagnostics::record(&reference, None, params, grid, 0.0, None);
    let err = tracking_record(&controlled, &reference, params, grid, 0.0);
    observer(&reference, &rec, &controlled, &err)?;
    let mut run = TrackingRun {
        reference,
        controlled,
        reference_records: vec![rec.clone()],
        reference_residual_violations: Vec::new(),
        errors: vec![err],
    };
    let mut last = rec;
    for _ in 0..opts.steps {
        let next_ref = step_free(&run.reference, params, grid, solver)?.state;
        let out = step_tracking(&run.controlled, &next_ref, params, grid, feedback, solver)?;
        let rec = diagnostics::record(&next_ref, Some(&run.reference), params, grid, 0.0, None);
        if !rec.inequalities_hold() {
            run.reference_residual_violations.push(run.reference.step);
        }
        let err = tracking_record(&out.state, &next_ref, params, grid, out.control_energy);
        observer(&next_ref, &rec, &out.state, &err)?;
        if keep(rec.step, opts.diagnostics_stride) {
            run.reference_records.push(rec.clone());
        }
        run.errors.push(err);
        run.reference = next_ref;
        run.controlled = out.state;
        last = rec;
    }
    if run.reference_records.last().map(|r| r.step) != Some(last.step) {
        run.reference_records.push(last);
    }
    Ok(run)
}

/// Decay analysis of a tracking error series.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingDecay {
    pub initial: f64,
    pub last: f64,
    /// `last / initial`
    pub final_ratio: f64,
    /// Steps after the transient where the error functional grew while
    /// still above the rounding floor.
    pub increases_after_transient: Vec<u64>,
    /// Least-squares slope of `ln(error)` against time over every sample
    /// above the floor.
    pub slope: Option<f64>,
    pub transient_steps: u64,
}

impl TrackingDecay {
    pub fn monotone(&self) -> bool {
        self.increases_after_transient.is_empty()
    }
}

/// Relative level below which the error functional is rounding noise.
pub const TRACKING_FLOOR: f64 = 1e-20;

/// `transient_fraction` of the records is skipped before checking that the
/// error functional is non-increasing.
pub fn analyze_tracking(errors: &[TrackingRecord], transient_fraction: f64) -> Option<TrackingDecay> {
    let first = errors.first()?;
    let last = errors.last()?;
    let initial = first.error_functional;
    let floor = TRACKING_FLOOR * initial;
    let skip = ((errors.len() - 1) as f64 * transient_fraction).ceil() as usize;
    let tail = &errors[skip.min(errors.len() - 1)..];
    let increases_after_transient = tail
        .windows(2)
        .filter(|w| w[0].error_functional > floor && w[1].error_functional > w[0].error_functional)
        .map(|w| w[0].step)
        .collect();
    let above: Vec<&TrackingRecord> = errors.iter().filter(|r| r.error_functional > floor).collect();
    let times: Vec<f64> = above.iter().map(|r| r.time).collect();
    let values: Vec<f64> = above.iter().map(|r| r.error_functional).collect();
    Some(TrackingDecay {
        initial,
        last: last.error_functional,
        final_ratio: if initial > 0.0 { last.error_functional / initial } else { 0.0 },
        increases_after_transient,
        slope: diagnostics::log_linear_slope(&times, &values),
        transient_steps: skip as u64,
    })
}
