//! Pre-commitment optimal stopping with a nonlinear penalty on the expected
//! stopping time, `sup_tau E[f(W_tau)] + g(E[tau])`.
//!
//! The problem is split into an expectation-constrained value `w(x, y)`,
//! computed from a degenerate-elliptic HJB on a uniform grid ([`hjb`]), and a
//! one-dimensional concave search over `y` ([`outer`]). The feedback control
//! read off the surface is simulated in [`policy`], and [`oracle`] provides
//! independent reference values.

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod oracle;
pub mod outer;
pub mod policy;
pub mod problem;

pub use error::{Error, Result};
pub use grid::{bilinear_sample, Grid2D, ValueSurface};
pub use hjb::{solve, ControlField, SolveResult, SolverConfig, SweepMode};
pub use outer::{maximize_over_y, value_function, OuterOptions, OuterResult};
pub use policy::{certify, extract_control, simulate, Certificate, SimConfig, SimulationResult};
pub use problem::{validate_problem, StoppingProblem, ValidationReport};
