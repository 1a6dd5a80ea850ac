//! Discrete Dirichlet Laplacian and the per-step matrices of the
//! semi-implicit scheme.
//!
//! All operators act on the `n - 1` interior nodes; boundary zeros live only
//! in [`State1D`]. The nonlinear coefficients are lagged to step `k`, which
//! leaves every system matrix symmetric positive definite for any `dt > 0`.

use crate::error::{Error, Result};
use crate::model::{Grid1D, Parameters1D, State1D};

/// Symmetric tridiagonal matrix stored as its diagonal and a single off-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Dimension(format!(
                "diagonal of length {} needs off-diagonal of length {}, got {}",
                diag.len(),
                diag.len().saturating_sub(1),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            diag: vec![1.0; m],
            off: vec![0.0; m.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        debug_assert_eq!(y.len(), m);
        for i in 0..m {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// `x^T T x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for i in 0..m {
            s += self.diag[i] * x[i] * x[i];
        }
        for i in 0..m.saturating_sub(1) {
            s += 2.0 * self.off[i] * x[i] * x[i + 1];
        }
        s
    }

    /// `alpha * self + diag(shift)`, elementwise on the stored bands.
    pub fn scaled_plus_diagonal(&self, alpha: f64, shift: &[f64]) -> Self {
        Self {
            diag: self
                .diag
                .iter()
                .zip(shift)
                .map(|(d, s)| alpha * d + s)
                .collect(),
            off: self.off.iter().map(|o| alpha * o).collect(),
        }
    }

    /// Dense copy, row-major. Meant for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            a[i][i] = self.diag[i];
            if i + 1 < m {
                a[i][i + 1] = self.off[i];
                a[i + 1][i] = self.off[i];
            }
        }
        a
    }
}

/// `Delta_h` on interior nodes: `2/dx^2` on the diagonal, `-1/dx^2` off it.
pub fn laplacian(grid: &Grid1D) -> TridiagonalOperator {
    let m = grid.interior();
    let inv = 1.0 / (grid.dx * grid.dx);
    TridiagonalOperator {
        diag: vec![2.0 * inv; m],
        off: vec![-inv; m - 1],
    }
}

/// Lagged reaction coefficients of one step, on interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeCoefficients {
    /// `|A_i|^2 + phi_i^2`
    pub h_plus: Vec<f64>,
    /// Identically one.
    pub h_minus: Vec<f64>,
    /// Identically `h`.
    pub g_plus: Vec<f64>,
    /// `|A_i|^2`
    pub g_minus: Vec<f64>,
}

impl SchemeCoefficients {
    /// `H_h = H_+ - H_- = -1 + |A|^2 + phi^2`.
    pub fn h_net(&self) -> Vec<f64> {
        self.h_plus
            .iter()
            .zip(&self.h_minus)
            .map(|(p, m)| p - m)
            .collect()
    }

    /// `G_h = G_+ - G_- = h - |A|^2`.
    pub fn g_net(&self) -> Vec<f64> {
        self.g_plus
            .iter()
            .zip(&self.g_minus)
            .map(|(p, m)| p - m)
            .collect()
    }
}

pub fn coefficients(state: &State1D, params: &Parameters1D) -> SchemeCoefficients {
    let n = state.n();
    let interior = 1..n;
    let a_sq: Vec<f64> = state.a[interior.clone()].iter().map(|z| z.norm_sqr()).collect();
    let h_plus = a_sq
        .iter()
        .zip(&state.phi[interior])
        .map(|(a2, p)| a2 + p * p)
        .collect();
    SchemeCoefficients {
        h_plus,
        h_minus: vec![1.0; n - 1],
        g_plus: vec![params.h; n - 1],
        g_minus: a_sq,
    }
}

/// Left and right matrices of one step: `M_A x = L_A A^k`, `M_phi y = L_phi phi^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub m_a: TridiagonalOperator,
    pub l_a_diag: Vec<f64>,
    pub m_phi: TridiagonalOperator,
    pub l_phi_diag: Vec<f64>,
}

pub fn system_matrices(
    lap: &TridiagonalOperator,
    coeffs: &SchemeCoefficients,
    params: &Parameters1D,
    grid: &Grid1D,
) -> SystemMatrices {
    let c = grid.dt / params.tau;
    let dt = grid.dt;

    let shift_a: Vec<f64> = coeffs.h_plus.iter().map(|hp| 1.0 + c * hp).collect();
    let m_a = lap.scaled_plus_diagonal(c, &shift_a);
    let l_a_diag = coeffs.h_minus.iter().map(|hm| 1.0 + c * hm).collect();

    let shift_phi: Vec<f64> = coeffs.g_plus.iter().map(|gp| 1.0 + dt * gp).collect();
    let m_phi = lap.scaled_plus_diagonal(dt * params.d1, &shift_phi);
    let l_phi_diag = coeffs.g_minus.iter().map(|gm| 1.0 + dt * gm).collect();

    SystemMatrices {
        m_a,
        l_a_diag,
        m_phi,
        l_phi_diag,
    }
}
