//! Semi-implicit finite-difference solver for the one-dimensional
//! amplitude/director system of chevron patterns,
//!
//! ```text
//! tau A_t = A_xx + A - (|A|^2 + phi^2) A
//!   phi_t = D1 phi_xx - h phi + |A|^2 phi
//! ```
//!
//! on `[0, L]` with homogeneous Dirichlet conditions, plus finite-mode
//! feedback stabilization of the zero state and tracking of a reference
//! solution.

pub mod control;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod linalg;
pub mod model;
pub mod simulation;
pub mod snapshot;
pub mod stepper;

pub use error::{Error, Result};
pub use linalg::LinearSolver;
pub use model::{Grid1D, InitialCondition, Parameters1D, Parameters2D, State1D};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
