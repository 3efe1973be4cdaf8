//! Feedback policy extraction, Monte Carlo simulation of the controlled pair
//! `X = x0 + W`, `dY = -dt + alpha dW`, and the suboptimality certificate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{fmt_num, ValueSurface};
use crate::hjb::{central_derivatives, ControlField, SolveResult};
use crate::outer::OuterResult;
use crate::problem::StoppingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// Slopes selected by the discrete Hamiltonian.
    ArgmaxField,
    /// `-w_xy / w_yy` where `w` is strictly concave in `y`, argmax elsewhere.
    #[default]
    RatioFormula,
}

/// Feedback control `alpha = -u_xy / u_yy` from central differences.
///
/// Nodes where `u_yy >= -eps_degenerate` take the value of `fallback` (or zero);
/// boundary nodes are zero.
pub fn extract_control(
    surface: &ValueSurface,
    eps_degenerate: f64,
    alpha_max: f64,
    fallback: Option<&ControlField>,
) -> ControlField {
    let g = surface.grid;
    let mut alpha = vec![0.0; g.len()];
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            let d = central_derivatives(surface, i, j);
            alpha[g.index(i, j)] = if d.u_yy < -eps_degenerate {
                (-d.u_xy / d.u_yy).clamp(-alpha_max, alpha_max)
            } else {
                fallback.map_or(0.0, |c| c.at(i, j))
            };
        }
    }
    ControlField { grid: g, alpha, alpha_max }
}

/// `1e-8` times the magnitude of the surface.
pub fn default_eps_degenerate(surface: &ValueSurface) -> f64 {
    1e-8 * surface.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Control used by the simulator for the chosen source.
pub fn policy_control(solve: &SolveResult, source: AlphaSource) -> ControlField {
    match source {
        AlphaSource::ArgmaxField => solve.control.clone(),
        AlphaSource::RatioFormula => extract_control(
            &solve.surface,
            default_eps_degenerate(&solve.surface),
            solve.control.alpha_max,
            Some(&solve.control),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_cap: f64,
    pub seed: u64,
    pub alpha_source: AlphaSource,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, dt: 1e-3, t_cap: 10.0, seed: 0, alpha_source: AlphaSource::RatioFormula }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationResult {
    pub est_payoff: f64,
    pub se_payoff: f64,
    pub est_tau: f64,
    pub se_tau: f64,
    pub capped_fraction: f64,
    /// Fraction of policy lookups whose query point was clamped to the grid.
    pub clamp_fraction: f64,
    pub n_paths: usize,
}

impl SimulationResult {
    pub fn capped_flagged(&self) -> bool {
        self.capped_fraction > 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub path: usize,
    pub tau: f64,
    pub payoff: f64,
    pub capped: bool,
}

struct PathOutcome {
    record: PathRecord,
    steps: u64,
    clamps: u64,
}

fn run_path(problem: &StoppingProblem, control: &ControlField, x0: f64, y0: f64, cfg: &SimConfig, path: usize) -> PathOutcome {
    let grid = control.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path as u64);
    let sq = cfg.dt.sqrt();
    let (mut x, mut y) = (x0, y0);
    let mut steps: u64 = 0;
    let mut clamps: u64 = 0;
    if y0 <= 0.0 {
        return PathOutcome {
            record: PathRecord { path, tau: 0.0, payoff: problem.payoff(x0), capped: false },
            steps,
            clamps,
        };
    }
    loop {
        let t = steps as f64 * cfg.dt;
        let (qx, qy) = grid.clamp(x, y);
        if qx != x || qy != y {
            clamps += 1;
        }
        let alpha = control.sample(qx, qy).expect("clamped query lies on the grid");
        let z: f64 = StandardNormal.sample(&mut rng);
        let dw = sq * z;
        let x_next = x + dw;
        let y_next = y - cfg.dt + alpha * dw;
        steps += 1;
        if y_next <= 0.0 {
            let theta = y / (y - y_next);
            let tau = t + theta * cfg.dt;
            let x_tau = x + theta * dw;
            return PathOutcome {
                record: PathRecord { path, tau, payoff: problem.payoff(x_tau), capped: false },
                steps,
                clamps,
            };
        }
        let t_next = steps as f64 * cfg.dt;
        if t_next >= cfg.t_cap {
            return PathOutcome {
                record: PathRecord { path, tau: t_next, payoff: problem.payoff(x_next), capped: true },
                steps,
                clamps,
            };
        }
        x = x_next;
        y = y_next;
    }
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

fn check_inputs(control: &ControlField, x0: f64, y0: f64, cfg: &SimConfig) -> Result<()> {
    if !(y0 >= 0.0) {
        return Err(Error::InvalidConfig(format!("y0 must be nonnegative, got {y0}")));
    }
    if !control.grid.contains(x0, y0) {
        return Err(Error::OutOfGrid { x: x0, y: y0 });
    }
    if cfg.n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be positive".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt <= control.grid.h_y() * (1.0 + 1e-12)) {
        return Err(Error::InvalidConfig(format!(
            "dt must lie in (0, h_y = {}], got {}",
            control.grid.h_y(),
            cfg.dt
        )));
    }
    if !(cfg.t_cap > 0.0 && cfg.t_cap.is_finite()) {
        return Err(Error::InvalidConfig("t_cap must be positive".into()));
    }
    Ok(())
}

/// Simulates all paths; results are independent of the rayon pool size.
pub fn simulate_paths(
    problem: &StoppingProblem,
    control: &ControlField,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<(SimulationResult, Vec<PathRecord>)> {
    check_inputs(control, x0, y0, cfg)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| run_path(problem, control, x0, y0, cfg, p))
        .collect();
    if let Some(bad) = outcomes.iter().find(|o| !o.record.payoff.is_finite()) {
        return Err(Error::PathNotFinite { path: bad.record.path });
    }
    let (est_payoff, se_payoff) = mean_and_se(outcomes.iter().map(|o| o.record.payoff));
    let (est_tau, se_tau) = mean_and_se(outcomes.iter().map(|o| o.record.tau));
    let capped = outcomes.iter().filter(|o| o.record.capped).count();
    let steps: u64 = outcomes.iter().map(|o| o.steps).sum();
    let clamps: u64 = outcomes.iter().map(|o| o.clamps).sum();
    let result = SimulationResult {
        est_payoff,
        se_payoff,
        est_tau,
        se_tau,
        capped_fraction: capped as f64 / cfg.n_paths as f64,
        clamp_fraction: if steps == 0 { 0.0 } else { clamps as f64 / steps as f64 },
        n_paths: cfg.n_paths,
    };
    Ok((result, outcomes.into_iter().map(|o| o.record).collect()))
}

pub fn simulate(
    problem: &StoppingProblem,
    control: &ControlField,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    simulate_paths(problem, control, x0, y0, cfg).map(|r| r.0)
}

/// CSV with header `path,tau,payoff`.
pub fn paths_to_csv(records: &[PathRecord]) -> String {
    let mut out = String::from("path,tau,payoff\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.path, fmt_num(r.tau), fmt_num(r.payoff));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub v_reported: f64,
    pub mc_value: f64,
    pub gap: f64,
    pub epsilon_budget: f64,
    pub combined_se: f64,
    pub pass: bool,
    pub note: String,
}

/// Checks `v <= J[x, tau] + epsilon_budget` up to three standard errors.
pub fn certify(problem: &StoppingProblem, outer: &OuterResult, sim: &SimulationResult, epsilon_budget: f64) -> Certificate {
    let mc_value = sim.est_payoff + problem.penalty(sim.est_tau);
    let gap = outer.v - mc_value;
    // Delta method for g(E[tau]); triangle inequality in place of the covariance.
    let h = 1e-6 * (1.0 + sim.est_tau.abs());
    let lo = (sim.est_tau - h).max(0.0);
    let slope = (problem.penalty(sim.est_tau + h) - problem.penalty(lo)) / (sim.est_tau + h - lo);
    let combined_se = sim.se_payoff + slope.abs() * sim.se_tau;
    let pass = gap <= epsilon_budget + 3.0 * combined_se;
    let note = format!(
        "budget {epsilon_budget} covers the outer search tolerance (bracket {}) plus the suboptimality of the simulated feedback control",
        outer.bracket_width_final
    );
    Certificate { v_reported: outer.v, mc_value, gap, epsilon_budget, combined_se, pass, note }
}
