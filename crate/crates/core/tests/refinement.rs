//! Time-step refinement studies on the long-domain regime.

use chevron_core::diagnostics::{estimate_m0, plateau_statistics};
use chevron_core::model::{initial_condition, InitialCondition};
use chevron_core::simulation::{run, Control, RunOptions, Trajectory};
use chevron_core::{Grid1D, LinearSolver, Parameters1D, State1D};

fn long_domain() -> Parameters1D {
    Parameters1D::new(1.0, 1.0, 0.1, 100.0).unwrap()
}

fn free_run(initial: State1D, dt: f64, horizon: f64) -> Trajectory {
    let g = Grid1D::new(512, 100.0, dt).unwrap();
    let steps = (horizon / dt).round() as u64;
    run(initial, &long_domain(), &g, Control::Free, &LinearSolver::Direct, &RunOptions::new(steps), &mut |_, _| Ok(()))
        .unwrap()
}

fn oscillatory(dt: f64) -> State1D {
    let g = Grid1D::new(512, 100.0, dt).unwrap();
    initial_condition(&InitialCondition::Oscillatory { seed: 20240611, amplitude: 0.2526 }, &g).unwrap()
}

#[test]
fn plateau_statistics_insensitive_to_time_step() {
    let coarse = plateau_statistics(&free_run(oscillatory(0.1), 0.1, 500.0).final_state);
    let fine = plateau_statistics(&free_run(oscillatory(0.05), 0.05, 500.0).final_state);
    assert!((coarse.0 - fine.0).abs() <= 1e-3 * coarse.0, "{coarse:?} vs {fine:?}");
    assert!((coarse.1 - fine.1).abs() <= 1e-3 * coarse.1, "{coarse:?} vs {fine:?}");
}

#[test]
fn gradient_bound_stable_under_time_step_halving() {
    let settled = free_run(oscillatory(0.1), 0.1, 500.0).final_state;
    let restart = |dt: f64| {
        let mut s = settled.clone();
        s.step = 0;
        s.time = 0.0;
        estimate_m0(&free_run(s, dt, 500.0).records).unwrap()
    };
    let (coarse, fine) = (restart(0.1), restart(0.05));
    assert!(coarse.is_finite() && coarse > 0.0);
    assert!((coarse - fine).abs() <= 0.05 * coarse, "{coarse} vs {fine}");
}
