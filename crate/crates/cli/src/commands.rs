//! The five subcommands.

use std::fmt::Write as _;
use std::path::Path;

use chevron_core::control::{
    build_mode_basis, check_tracking_conditions, continuous_eigenvalue, discrete_eigenvalue,
    full_damping_margin, mode_count_2d, plan_zero_stabilization, sine_mode, StabilizationPlan,
};
use chevron_core::diagnostics::{
    estimate_m0, plateau_statistics, verify_dissipative_bound, DiagnosticsRecord,
};
use chevron_core::discretization::laplacian;
use chevron_core::model::initial_condition;
use chevron_core::simulation::{
    analyze_tracking, run, run_tracking, Control, RunOptions, Trajectory,
};
use chevron_core::stepper::{step_free, TrackingFeedback};
use chevron_core::{Grid1D, LinearSolver, Parameters1D, State1D};

use crate::config::Config;
use crate::output::{
    diagnostics_row, tracking_row, Bundle, CsvSink, DIAGNOSTICS_FILE, DIAGNOSTICS_HEADER,
    TRACKING_FILE, TRACKING_HEADER,
};
use crate::CliError;

pub type Summary = Vec<(String, String)>;

fn push(summary: &mut Summary, key: &str, value: impl ToString) {
    summary.push((key.to_string(), value.to_string()));
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

/// Settings shared by the time-stepping commands.
struct Setup {
    params: Parameters1D,
    grid: Grid1D,
    solver: LinearSolver,
    steps: u64,
    diagnostics_stride: u64,
    snapshot_stride: u64,
}

impl Setup {
    fn from(cfg: &Config) -> Result<Self, CliError> {
        let params = cfg.params()?;
        let grid = cfg.grid()?;
        grid.check_against(&params)?;
        Ok(Self {
            params,
            grid,
            solver: cfg.solver()?,
            steps: cfg.steps()?,
            diagnostics_stride: cfg.stride("run.diagnostics_stride")?,
            snapshot_stride: cfg.stride("run.snapshot_stride")?,
        })
    }
}

/// Writes diagnostics rows and snapshots for one trajectory.
struct TrajectoryWriter<'a> {
    bundle: &'a Bundle,
    grid: Grid1D,
    diagnostics: CsvSink,
    diagnostics_stride: u64,
    snapshot_stride: u64,
    prefix: &'static str,
    last_snapshot: Option<u64>,
}

impl<'a> TrajectoryWriter<'a> {
    fn new(bundle: &'a Bundle, setup: &Setup, file: &str, prefix: &'static str) -> Result<Self, CliError> {
        Ok(Self {
            bundle,
            grid: setup.grid,
            diagnostics: bundle.csv(file, DIAGNOSTICS_HEADER)?,
            diagnostics_stride: setup.diagnostics_stride,
            snapshot_stride: setup.snapshot_stride,
            prefix,
            last_snapshot: None,
        })
    }

    fn observe(&mut self, state: &State1D, rec: &DiagnosticsRecord) -> Result<(), CliError> {
        if rec.step.is_multiple_of(self.diagnostics_stride) {
            self.diagnostics.write(rec.step, &diagnostics_row(rec))?;
        }
        if state.step.is_multiple_of(self.snapshot_stride) {
            self.snapshot(state)?;
        }
        Ok(())
    }

    fn snapshot(&mut self, state: &State1D) -> Result<(), CliError> {
        self.bundle.snapshot(self.prefix, state, &self.grid)?;
        self.last_snapshot = Some(state.step);
        Ok(())
    }

    /// Makes sure the final state and record are on disk.
    fn finish(mut self, state: &State1D, rec: &DiagnosticsRecord) -> Result<(), CliError> {
        if self.diagnostics.last_step() != Some(rec.step) {
            self.diagnostics.write(rec.step, &diagnostics_row(rec))?;
        }
        if self.last_snapshot != Some(state.step) {
            self.snapshot(state)?;
        }
        self.diagnostics.finish()
    }
}

/// Forwards to the writer, stashing the CLI error so it survives the core run loop.
fn observe_with(
    writer: &mut TrajectoryWriter<'_>,
    state: &State1D,
    rec: &DiagnosticsRecord,
    slot: &mut Option<CliError>,
) -> chevron_core::Result<()> {
    writer.observe(state, rec).map_err(|e| {
        let msg = e.to_string();
        *slot = Some(e);
        chevron_core::Error::Invariant(msg)
    })
}

/// Error from `run`, preferring one stashed by the observer.
fn run_error(e: chevron_core::Error, slot: Option<CliError>) -> CliError {
    slot.unwrap_or(CliError::Core(e))
}

fn residual_summary(summary: &mut Summary, traj: &Trajectory) {
    push(summary, "residual_violations", traj.residual_violations.len());
    let names = [
        "max_growth_residual_a",
        "max_growth_residual_phi",
        "max_energy_residual_a",
        "max_energy_residual_phi",
    ];
    for (name, v) in names.iter().zip(traj.max_residuals) {
        push(summary, name, format!("{v:e}"));
    }
}

fn final_record(traj: &Trajectory) -> &DiagnosticsRecord {
    traj.records.last().expect("trajectory has at least the initial record")
}

pub fn simulate(cfg: &Config, out: &Path) -> Result<Summary, CliError> {
    let setup = Setup::from(cfg)?;
    let initial = initial_condition(&cfg.initial_condition("initial")?, &setup.grid)?;
    let bundle = Bundle::create(out)?;
    let mut writer = TrajectoryWriter::new(&bundle, &setup, DIAGNOSTICS_FILE, "state")?;
    let opts = RunOptions {
        steps: setup.steps,
        diagnostics_stride: setup.diagnostics_stride,
        stop_below: None,
    };
    let mut failure = None;
    let traj = run(
        initial,
        &setup.params,
        &setup.grid,
        Control::Free,
        &setup.solver,
        &opts,
        &mut |s, r| observe_with(&mut writer, s, r, &mut failure),
    )
    .map_err(|e| run_error(e, failure.take()))?;
    writer.finish(&traj.final_state, final_record(&traj))?;

    let mut summary = Summary::new();
    push(&mut summary, "steps_taken", traj.steps_taken);
    push(&mut summary, "final_time", traj.final_state.time);
    let (pa, pp) = plateau_statistics(&traj.final_state);
    push(&mut summary, "plateau_median_abs_a", pa);
    push(&mut summary, "plateau_median_abs_phi", pp);
    residual_summary(&mut summary, &traj);
    push(&mut summary, "lyapunov_increases", traj.lyapunov_increases.len());
    push(
        &mut summary,
        "first_lyapunov_increase_step",
        opt(traj.lyapunov_increases.first().map(|x| x.0)),
    );
    let slack = cfg.real("run.dissipative_slack")?;
    let dis = verify_dissipative_bound(&traj.records, &setup.params, slack)?;
    let status = match (dis.satisfied(), dis.non_binding) {
        (false, _) => "violated",
        (true, true) => "satisfied, non-binding",
        (true, false) => "satisfied",
    };
    push(&mut summary, "dissipative_bound", status);
    push(&mut summary, "dissipative_alpha", dis.alpha);
    push(&mut summary, "dissipative_max_utilization", dis.max_utilization);
    push(
        &mut summary,
        "dissipative_first_violation_step",
        opt(dis.first_violation.map(|v| v.0)),
    );
    push(&mut summary, "m0_estimate", estimate_m0(&traj.records)?);
    push(&mut summary, "solver_iterations", traj.total_solver_iterations);
    Ok(summary)
}

fn plan_summary(summary: &mut Summary, plan: &StabilizationPlan) {
    push(summary, "plan_threshold", plan.threshold);
    push(summary, "plan_mu", plan.mu);
    push(summary, "plan_k_prescribed", plan.k_prescribed);
    push(summary, "plan_k_modes", plan.k_modes);
    push(summary, "plan_clamped", plan.clamped);
    push(summary, "plan_uncovered_by_prescription", list(&plan.uncovered_by_prescription));
    push(
        summary,
        "plan_criterion",
        if plan.satisfies_criterion() { "satisfied" } else { "violated" },
    );
}

fn list(v: &[usize]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" ")
    }
}

pub fn stabilize(cfg: &Config, out: &Path) -> Result<Summary, CliError> {
    let setup = Setup::from(cfg)?;
    let initial = initial_condition(&cfg.initial_condition("initial")?, &setup.grid)?;
    let plan = plan_zero_stabilization(&initial, &setup.grid, cfg.real("stabilize.epsilon")?)?;
    let mu = cfg.real_auto("stabilize.mu")?.unwrap_or(plan.mu);
    let k_modes = cfg.count_auto("stabilize.k_modes")?.unwrap_or(plan.k_modes);
    let basis = build_mode_basis(&setup.grid, k_modes, mu)?;
    // Every mode contracts when lambda_j + mu [j <= K] exceeds ||H_-||_inf = 1.
    let enforce = full_damping_margin(&setup.grid, mu, k_modes, 1.0) > 0.0;
    let stop = cfg.real("stabilize.stop_below")?;

    let bundle = Bundle::create(out)?;
    let mut writer = TrajectoryWriter::new(&bundle, &setup, DIAGNOSTICS_FILE, "state")?;
    let opts = RunOptions {
        steps: setup.steps,
        diagnostics_stride: setup.diagnostics_stride,
        stop_below: (stop > 0.0).then_some(stop),
    };
    let mut failure = None;
    let mut prev_norm: Option<f64> = None;
    let traj = run(
        initial,
        &setup.params,
        &setup.grid,
        Control::Stabilized(&basis),
        &setup.solver,
        &opts,
        &mut |s, r| {
            if let Some(p) = prev_norm {
                if enforce && p >= chevron_core::simulation::MONOTONICITY_FLOOR && r.raw_l2_a >= p {
                    let msg = format!(
                        "||A|| did not decrease at step {}: {p:e} -> {:e}",
                        r.step, r.raw_l2_a
                    );
                    failure = Some(CliError::Invariant(msg.clone()));
                    let _ = writer.observe(s, r);
                    return Err(chevron_core::Error::Invariant(msg));
                }
            }
            prev_norm = Some(r.raw_l2_a);
            observe_with(&mut writer, s, r, &mut failure)
        },
    )
    .map_err(|e| run_error(e, failure.take()))?;
    writer.finish(&traj.final_state, final_record(&traj))?;

    let last = final_record(&traj);
    let mut summary = Summary::new();
    plan_summary(&mut summary, &plan);
    push(&mut summary, "mu", mu);
    push(&mut summary, "k_modes", k_modes);
    push(&mut summary, "monotonicity_enforced", enforce);
    push(&mut summary, "amplitude_increases", traj.amplitude_increases.len());
    push(&mut summary, "steps_taken", traj.steps_taken);
    push(&mut summary, "first_step_a_below_1e-6", opt(traj.first_below_a));
    push(&mut summary, "first_step_phi_below_1e-6", opt(traj.first_below_phi));
    push(
        &mut summary,
        "decayed",
        traj.first_below_a.is_some() && traj.first_below_phi.is_some(),
    );
    push(&mut summary, "final_raw_l2_a", last.raw_l2_a);
    push(&mut summary, "final_raw_l2_phi", last.raw_l2_phi);
    residual_summary(&mut summary, &traj);
    push(&mut summary, "solver_iterations", traj.total_solver_iterations);
    Ok(summary)
}

/// Advances `state` by `steps` free steps and resets its clock.
fn settle(
    mut state: State1D,
    steps: u64,
    params: &Parameters1D,
    grid: &Grid1D,
    solver: &LinearSolver,
) -> Result<State1D, CliError> {
    for _ in 0..steps {
        state = step_free(&state, params, grid, solver)?.state;
    }
    state.step = 0;
    state.time = 0.0;
    Ok(state)
}

pub fn track(cfg: &Config, out: &Path) -> Result<Summary, CliError> {
    let setup = Setup::from(cfg)?;
    let (params, grid) = (setup.params, setup.grid);
    let reference_ic = initial_condition(&cfg.initial_condition("reference")?, &grid)?;
    let controlled = initial_condition(&cfg.initial_condition("initial")?, &grid)?;
    let settle_steps: u64 = cfg.count("reference.settle_steps")? as u64;
    let reference = settle(reference_ic, settle_steps, &params, &grid, &setup.solver)?;

    let m0 = match cfg.real_auto("track.m0")? {
        Some(v) => v,
        None => {
            let prerun = cfg.count_auto("track.prerun_steps")?.map_or(setup.steps, |v| v as u64);
            let traj = run(
                reference.clone(),
                &params,
                &grid,
                Control::Free,
                &setup.solver,
                &RunOptions::new(prerun),
                &mut |_, _| Ok(()),
            )?;
            estimate_m0(&traj.records)?
        }
    };
    let minimal = check_tracking_conditions(m0, &params, 0.0, 0.0, 0, 0)?;
    let max_modes = grid.interior();
    let mu1 = cfg.real_auto("track.mu1")?.unwrap_or(minimal.min_mu1);
    let mu2 = cfg.real_auto("track.mu2")?.unwrap_or(minimal.min_mu2);
    let n1 = cfg.count_auto("track.n1")?.unwrap_or(minimal.min_n1.min(max_modes));
    let n2 = cfg.count_auto("track.n2")?.unwrap_or(minimal.min_n2.min(max_modes));
    let conditions = check_tracking_conditions(m0, &params, mu1, mu2, n1, n2)?;
    let feedback = TrackingFeedback::new(&grid, mu1, mu2, n1, n2)?;

    let bundle = Bundle::create(out)?;
    let mut writer = TrajectoryWriter::new(&bundle, &setup, DIAGNOSTICS_FILE, "reference")?;
    let mut errors = bundle.csv(TRACKING_FILE, TRACKING_HEADER)?;
    let mut last_controlled_snapshot = None;
    let opts = RunOptions {
        steps: setup.steps,
        diagnostics_stride: setup.diagnostics_stride,
        stop_below: None,
    };
    let mut failure = None;
    let result = run_tracking(
        reference,
        controlled,
        &params,
        &grid,
        &feedback,
        &setup.solver,
        &opts,
        &mut |rs, rr, cs, er| {
            let mut inner = || -> Result<(), CliError> {
                writer.observe(rs, rr)?;
                if er.step.is_multiple_of(setup.diagnostics_stride) {
                    errors.write(er.step, &tracking_row(er))?;
                }
                if cs.step.is_multiple_of(setup.snapshot_stride) {
                    bundle.snapshot("controlled", cs, &grid)?;
                    last_controlled_snapshot = Some(cs.step);
                }
                Ok(())
            };
            inner().map_err(|e| {
                let msg = e.to_string();
                failure = Some(e);
                chevron_core::Error::Invariant(msg)
            })
        },
    )
    .map_err(|e| run_error(e, failure.take()))?;

    let last_ref = result
        .reference_records
        .last()
        .expect("reference trace has the initial record");
    writer.finish(&result.reference, last_ref)?;
    let last_err = result.errors.last().expect("error series has the initial record");
    if errors.last_step() != Some(last_err.step) {
        errors.write(last_err.step, &tracking_row(last_err))?;
    }
    errors.finish()?;
    if last_controlled_snapshot != Some(result.controlled.step) {
        bundle.snapshot("controlled", &result.controlled, &grid)?;
    }

    let fraction = cfg.real("track.transient_fraction")?;
    let decay = analyze_tracking(&result.errors, fraction)
        .ok_or_else(|| CliError::Config("tracking produced no records".into()))?;
    let mut summary = Summary::new();
    push(&mut summary, "m0", m0);
    push(&mut summary, "mu1", mu1);
    push(&mut summary, "mu2", mu2);
    push(&mut summary, "n1", n1);
    push(&mut summary, "n2", n2);
    push(
        &mut summary,
        "conditions",
        if conditions.passed() { "met" } else { "conditions unmet" },
    );
    for (i, c) in conditions.checks.iter().enumerate() {
        push(
            &mut summary,
            &format!("condition_{}", i + 1),
            format!("{} : lhs {} rhs {} {}", c.name, c.lhs, c.rhs, if c.passed { "ok" } else { "failed" }),
        );
    }
    push(&mut summary, "initial_error", decay.initial);
    push(&mut summary, "final_error", decay.last);
    push(&mut summary, "final_error_ratio", decay.final_ratio);
    push(&mut summary, "transient_steps", decay.transient_steps);
    push(&mut summary, "monotone_after_transient", decay.monotone());
    push(&mut summary, "increases_after_transient", decay.increases_after_transient.len());
    push(&mut summary, "decay_slope", opt(decay.slope));
    push(
        &mut summary,
        "reference_residual_violations",
        result.reference_residual_violations.len(),
    );
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

fn header_line(out: &mut String, format: Format, key: &str, value: impl std::fmt::Display) {
    let _ = match format {
        Format::Text => writeln!(out, "{key:<28} {value}"),
        Format::Csv => writeln!(out, "# {key} = {value}"),
    };
}

pub fn modes(cfg: &Config, format: Format) -> Result<String, CliError> {
    let mut out = String::new();
    match cfg.count("modes.dimension")? {
        1 => {
            let grid = cfg.grid()?;
            grid.check_against(&cfg.params()?)?;
            let a0 = initial_condition(&cfg.initial_condition("initial")?, &grid)?;
            let plan = plan_zero_stabilization(&a0, &grid, cfg.real("stabilize.epsilon")?)?;
            let mut s = Summary::new();
            push(&mut s, "a0_norm_sq", a0.a_norm_sq());
            plan_summary(&mut s, &plan);
            push(&mut s, "plan_violations", plan.violations.len());
            for (k, v) in &s {
                header_line(&mut out, format, k, v);
            }
            let last = (plan.k_modes + 5).min(grid.interior());
            table_header(&mut out, format, &["j", "lambda_discrete", "lambda_continuous", "controlled", "below_threshold"]);
            for j in 1..=last {
                let lam = discrete_eigenvalue(&grid, j);
                table_row(
                    &mut out,
                    format,
                    &[
                        j.to_string(),
                        format!("{lam:.12e}"),
                        format!("{:.12e}", continuous_eigenvalue(grid.length(), j)),
                        (j <= plan.k_modes).to_string(),
                        (lam <= plan.threshold).to_string(),
                    ],
                );
            }
        }
        2 => {
            let p = cfg.params_2d()?;
            let mc = mode_count_2d(&p, cfg.count("modes.max_index")?)?;
            header_line(&mut out, format, "n_required", mc.n_required);
            header_line(&mut out, format, "delta0", mc.delta0);
            header_line(&mut out, format, "inverse_delta0", 1.0 / mc.delta0);
            table_header(&mut out, format, &["rank", "eigenvalue", "counted"]);
            for (i, lam) in mc.eigenvalues.iter().take(mc.n_required + 5).enumerate() {
                table_row(
                    &mut out,
                    format,
                    &[
                        (i + 1).to_string(),
                        format!("{lam:.12e}"),
                        (i < mc.n_required).to_string(),
                    ],
                );
            }
        }
        d => return Err(CliError::Config(format!("modes.dimension must be 1 or 2, got {d}"))),
    }
    Ok(out)
}

fn table_header(out: &mut String, format: Format, cols: &[&str]) {
    match format {
        Format::Text => {
            out.push('\n');
            let _ = writeln!(out, "{}", cols.iter().map(|c| format!("{c:>20}")).collect::<String>());
        }
        Format::Csv => {
            let _ = writeln!(out, "{}", cols.join(","));
        }
    }
}

fn table_row(out: &mut String, format: Format, cols: &[String]) {
    let _ = match format {
        Format::Text => writeln!(out, "{}", cols.iter().map(|c| format!("{c:>20}")).collect::<String>()),
        Format::Csv => writeln!(out, "{}", cols.join(",")),
    };
}

pub fn eigen(cfg: &Config, format: Format, count: Option<usize>) -> Result<String, CliError> {
    let grid = cfg.grid()?;
    let lap = laplacian(&grid);
    let last = count.unwrap_or(grid.interior()).min(grid.interior());
    let mut out = String::new();
    header_line(&mut out, format, "n", grid.n);
    header_line(&mut out, format, "length", grid.length());
    header_line(&mut out, format, "dx", grid.dx);
    table_header(&mut out, format, &["j", "lambda_discrete", "lambda_continuous", "residual"]);
    for j in 1..=last {
        let v = sine_mode(&grid, j);
        let lam = discrete_eigenvalue(&grid, j);
        let residual = lap
            .apply(&v)
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lam * b).powi(2))
            .sum::<f64>()
            .sqrt();
        table_row(
            &mut out,
            format,
            &[
                j.to_string(),
                format!("{lam:.12e}"),
                format!("{:.12e}", continuous_eigenvalue(grid.length(), j)),
                format!("{residual:.3e}"),
            ],
        );
    }
    Ok(out)
}
