//! Parameters, grids, fields and run configuration shared by every module.

use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::LinearSolver;
use crate::snapshot;

/// Physical constants of the one-dimensional system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parameters1D {
    /// Relaxation time of the amplitude equation.
    pub tau: f64,
    /// Director diffusion coefficient.
    pub d1: f64,
    /// Director damping.
    pub h: f64,
    /// Domain length.
    pub length: f64,
}

impl Parameters1D {
    pub fn new(tau: f64, d1: f64, h: f64, length: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if !(d1 > 0.0 && d1.is_finite()) {
            return Err(Error::invalid(format!("d1 must be positive, got {d1}")));
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("h must be nonnegative, got {h}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self { tau, d1, h, length })
    }
}

/// Constants of the two-dimensional system on an `lx` by `ly` rectangle.
///
/// Only the mode-count selector uses these; there is no 2D time stepping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parameters2D {
    pub tau: f64,
    pub d1: f64,
    pub d2: f64,
    pub h: f64,
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
    pub lx: f64,
    pub ly: f64,
}

impl Parameters2D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tau: f64,
        d1: f64,
        d2: f64,
        h: f64,
        c1: f64,
        c2: f64,
        beta: f64,
        lx: f64,
        ly: f64,
    ) -> Result<Self> {
        for (name, v) in [("tau", tau), ("d1", d1), ("d2", d2), ("lx", lx), ("ly", ly)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("h", h), ("c1", c1), ("c2", c2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        if !(c1 < 1.0 || c1 >= 2.0 * c2) {
            return Err(Error::invalid(format!(
                "need c1 < 1 or c1 >= 2 c2, got c1 = {c1}, c2 = {c2}"
            )));
        }
        Ok(Self {
            tau,
            d1,
            d2,
            h,
            c1,
            c2,
            beta,
            lx,
            ly,
        })
    }
}

/// Uniform grid on `[0, L]` with `n` intervals and a fixed time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64, dt: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("need at least 3 intervals, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!(
                "length must be positive, got {length}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            n,
            dx: length / n as f64,
            dt,
        })
    }

    /// Number of interior nodes, `n - 1`.
    pub fn interior(&self) -> usize {
        self.n - 1
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// Checks that the grid spans the domain of `params`.
    pub fn check_against(&self, params: &Parameters1D) -> Result<()> {
        let rel = (self.length() - params.length).abs() / params.length;
        if rel > 1e-12 {
            return Err(Error::Dimension(format!(
                "grid spans {} but domain length is {}",
                self.length(),
                params.length
            )));
        }
        Ok(())
    }
}

/// Amplitude and director fields at all `n + 1` nodes, boundaries included.
#[derive(Clone, Debug, PartialEq)]
pub struct State1D {
    pub a: Vec<Complex64>,
    pub phi: Vec<f64>,
    /// Time-step index `k`.
    pub step: u64,
    /// `k * dt`, recomputed from the index on every step.
    pub time: f64,
}

impl State1D {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            a: vec![Complex64::new(0.0, 0.0); grid.n + 1],
            phi: vec![0.0; grid.n + 1],
            step: 0,
            time: 0.0,
        }
    }

    /// Builds a state from full-length fields, enforcing the Dirichlet boundary.
    pub fn from_fields(a: Vec<Complex64>, phi: Vec<f64>, grid: &Grid1D) -> Result<Self> {
        let s = Self {
            a,
            phi,
            step: 0,
            time: 0.0,
        };
        s.validate(grid)?;
        Ok(s)
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if self.a.len() != grid.n + 1 || self.phi.len() != grid.n + 1 {
            return Err(Error::Dimension(format!(
                "fields have {} and {} nodes, grid needs {}",
                self.a.len(),
                self.phi.len(),
                grid.n + 1
            )));
        }
        let n = grid.n;
        if self.a[0] != Complex64::new(0.0, 0.0)
            || self.a[n] != Complex64::new(0.0, 0.0)
            || self.phi[0] != 0.0
            || self.phi[n] != 0.0
        {
            return Err(Error::invalid("boundary values must be zero"));
        }
        if self.a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            || self.phi.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("field contains non-finite values"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.len() - 1
    }

    pub fn a_re(&self) -> Vec<f64> {
        self.a[1..self.n()].iter().map(|z| z.re).collect()
    }

    pub fn a_im(&self) -> Vec<f64> {
        self.a[1..self.n()].iter().map(|z| z.im).collect()
    }

    pub fn phi_interior(&self) -> &[f64] {
        &self.phi[1..self.n()]
    }

    /// Reassembles a state at step `step` from interior vectors.
    pub fn from_interior(re: &[f64], im: &[f64], phi: &[f64], step: u64, dt: f64) -> Self {
        let m = re.len();
        let mut a = Vec::with_capacity(m + 2);
        a.push(Complex64::new(0.0, 0.0));
        a.extend(re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)));
        a.push(Complex64::new(0.0, 0.0));
        let mut p = Vec::with_capacity(m + 2);
        p.push(0.0);
        p.extend_from_slice(phi);
        p.push(0.0);
        Self {
            a,
            phi: p,
            step,
            time: step as f64 * dt,
        }
    }

    /// Unscaled vector norm squared, `sum |A_i|^2`.
    pub fn a_norm_sq(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn phi_norm_sq(&self) -> f64 {
        self.phi.iter().map(|v| v * v).sum()
    }
}

/// Ways to construct the initial state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// Independent uniform samples in `[-amplitude, amplitude]` on interior
    /// nodes for `Re A`, `Im A` and `phi`.
    Oscillatory { seed: u64, amplitude: f64 },
    /// Real Gaussian bump `amplitude * exp(-(x - center)^2 / (2 width^2))` in both fields.
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    Zero,
    /// A snapshot file written by the CLI.
    FromFile(PathBuf),
}

pub fn initial_condition(kind: &InitialCondition, grid: &Grid1D) -> Result<State1D> {
    let n = grid.n;
    let mut state = State1D::zeros(grid);
    match kind {
        InitialCondition::Zero => {}
        InitialCondition::Oscillatory { seed, amplitude } => {
            if !amplitude.is_finite() {
                return Err(Error::invalid("amplitude must be finite"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let sample = |rng: &mut ChaCha8Rng| amplitude * (2.0 * rng.gen::<f64>() - 1.0);
            for i in 1..n {
                let re = sample(&mut rng);
                let im = sample(&mut rng);
                let phi = sample(&mut rng);
                state.a[i] = Complex64::new(re, im);
                state.phi[i] = phi;
            }
        }
        InitialCondition::Gaussian {
            center,
            width,
            amplitude,
        } => {
            if !(*width > 0.0) {
                return Err(Error::invalid(format!("width must be positive, got {width}")));
            }
            for i in 1..n {
                let z = (grid.x(i) - center) / width;
                let g = amplitude * (-0.5 * z * z).exp();
                state.a[i] = Complex64::new(g, 0.0);
                state.phi[i] = g;
            }
        }
        InitialCondition::FromFile(path) => {
            state = snapshot::read_snapshot(path, grid)?;
        }
    }
    Ok(state)
}

/// Feedback applied during a run.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlMode {
    None,
    ZeroStabilization { mu: f64, k_modes: usize },
    Tracking {
        mu1: f64,
        mu2: f64,
        n1: usize,
        n2: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub snapshot_stride: u64,
    pub diagnostics_stride: u64,
    pub directory: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: Parameters1D,
    pub grid: Grid1D,
    pub steps: u64,
    pub control: ControlMode,
    pub solver: LinearSolver,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(
        params: Parameters1D,
        grid: Grid1D,
        steps: u64,
        control: ControlMode,
        solver: LinearSolver,
        output: OutputSpec,
    ) -> Result<Self> {
        grid.check_against(&params)?;
        if steps == 0 {
            return Err(Error::invalid("steps must be positive"));
        }
        if output.snapshot_stride == 0 || output.diagnostics_stride == 0 {
            return Err(Error::invalid("output strides must be positive"));
        }
        let max_modes = grid.interior();
        match control {
            ControlMode::None => {}
            ControlMode::ZeroStabilization { mu, k_modes } => {
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(Error::invalid(format!("mu must be nonnegative, got {mu}")));
                }
                if k_modes == 0 || k_modes > max_modes {
                    return Err(Error::invalid(format!(
                        "k_modes must lie in 1..={max_modes}, got {k_modes}"
                    )));
                }
            }
            ControlMode::Tracking { mu1, mu2, n1, n2 } => {
                if !(mu1 >= 0.0 && mu2 >= 0.0 && mu1.is_finite() && mu2.is_finite()) {
                    return Err(Error::invalid("tracking gains must be nonnegative"));
                }
                if n1 > max_modes || n2 > max_modes {
                    return Err(Error::invalid(format!(
                        "tracking mode counts must not exceed {max_modes}"
                    )));
                }
            }
        }
        solver.validate()?;
        Ok(Self {
            params,
            grid,
            steps,
            control,
            solver,
            output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, length: f64) -> Grid1D {
        Grid1D::new(n, length, 0.1).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Parameters1D::new(0.0, 1.0, 0.1, 1.0).is_err());
        assert!(Parameters1D::new(1.0, -1.0, 0.1, 1.0).is_err());
        assert!(Parameters1D::new(1.0, 1.0, -0.1, 1.0).is_err());
        assert!(Parameters1D::new(1.0, 1.0, 0.1, 0.0).is_err());
        assert!(Parameters1D::new(1.0, 1.0, 0.0, 1.0).is_ok());
        assert!(Grid1D::new(2, 1.0, 0.1).is_err());
        assert!(Grid1D::new(8, 1.0, 0.0).is_err());
    }

    #[test]
    fn two_dimensional_hypothesis() {
        let ok = |c1, c2| Parameters2D::new(1.0, 1.0, 1.0, 0.1, c1, c2, 0.0, 1.0, 1.0);
        assert!(ok(0.5, 1.0).is_ok());
        assert!(ok(3.0, 1.0).is_ok());
        assert!(ok(1.5, 1.0).is_err());
    }

    #[test]
    fn zero_condition() {
        let g = grid(16, 2.0);
        let s = initial_condition(&InitialCondition::Zero, &g).unwrap();
        assert_eq!(s.time, 0.0);
        assert!(s.a.iter().all(|z| z.norm() == 0.0));
        assert!(s.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oscillatory_is_deterministic_and_bounded() {
        let g = grid(8, 1.0);
        let ic = InitialCondition::Oscillatory {
            seed: 7,
            amplitude: 1.0,
        };
        let s1 = initial_condition(&ic, &g).unwrap();
        let s2 = initial_condition(&ic, &g).unwrap();
        for (x, y) in s1.a.iter().zip(&s2.a) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        for (x, y) in s1.phi.iter().zip(&s2.phi) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        s1.validate(&g).unwrap();
        assert!(s1.a[1..8].iter().all(|z| z.re.abs() <= 1.0 && z.im.abs() <= 1.0));
        assert!(s1.a[1..8].iter().any(|z| z.re != 0.0));
        let other = initial_condition(
            &InitialCondition::Oscillatory {
                seed: 8,
                amplitude: 1.0,
            },
            &g,
        )
        .unwrap();
        assert_ne!(s1, other);
    }

    #[test]
    fn gaussian_peaks_at_center_node() {
        let length = 100.0;
        let g = grid(512, length);
        let s = initial_condition(
            &InitialCondition::Gaussian {
                center: length / 2.0,
                width: length / 10.0,
                amplitude: 1.0,
            },
            &g,
        )
        .unwrap();
        let (imax, vmax) = s.a[1..512]
            .iter()
            .enumerate()
            .map(|(i, z)| (i + 1, z.norm()))
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!(imax, 256);
        assert_eq!(vmax, 1.0);
        assert_eq!(s.a[0].norm(), 0.0);
        assert_eq!(s.a[512].norm(), 0.0);
    }

    #[test]
    fn run_config_limits_mode_counts() {
        let p = Parameters1D::new(1.0, 1.0, 0.1, 1.0).unwrap();
        let g = Grid1D::new(8, 1.0, 0.01).unwrap();
        let out = OutputSpec {
            snapshot_stride: 1,
            diagnostics_stride: 1,
            directory: "out".into(),
        };
        let mk = |control| RunConfig::new(p, g, 10, control, LinearSolver::Direct, out.clone());
        assert!(mk(ControlMode::ZeroStabilization { mu: 1.0, k_modes: 7 }).is_ok());
        assert!(mk(ControlMode::ZeroStabilization { mu: 1.0, k_modes: 8 }).is_err());
        assert!(mk(ControlMode::Tracking {
            mu1: 1.0,
            mu2: 1.0,
            n1: 9,
            n2: 1
        })
        .is_err());
        let wrong_grid = Grid1D::new(8, 2.0, 0.01).unwrap();
        assert!(RunConfig::new(p, wrong_grid, 10, ControlMode::None, LinearSolver::Direct, out).is_err());
    }
}
