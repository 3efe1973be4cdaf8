//! Run configuration read from a TOML file.
//!
//! ```toml
//! output_dir = "out"
//!
//! [problem]
//! beta = 1.0
//! gamma = 1.0
//! lambda = 0.0
//! payoff = { family = "quadratic", a = -1.0, b = 1.0 }
//! penalty = { family = "polynomial", coefficients = [0.0, -1.0] }
//!
//! [grid]
//! x_min = -4.0
//! x_max = 4.0
//! y_max = 1.0
//! n_x = 161
//! n_y = 81
//!
//! [solver]          # every field optional
//! [outer]           # xs, y_max, tol_y, tol_conc
//! [simulate]        # x0, y0, n_paths, dt, t_cap, seed, alpha_source, dump_paths, epsilon_budget
//! [[verify.cases]]  # kind = "quadratic" | "tree_dual" | "heat_lower_bound"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::hjb::SolverConfig;
use crate::outer::TOL_CONC;
use crate::policy::{AlphaSource, SimConfig};
use crate::problem::{
    PayoffFamily, PenaltyFamily, StoppingProblem, ValidationTolerances, PAYOFF_FAMILIES, PENALTY_FAMILIES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub payoff: PayoffFamily,
    #[serde(default = "zero_penalty")]
    pub penalty: PenaltyFamily,
    /// Proceed even when the growth, dominator or concavity checks fail.
    #[serde(default)]
    pub allow_assumption_violations: bool,
    #[serde(default)]
    pub validation: ValidationTolerances,
}

fn zero_penalty() -> PenaltyFamily {
    PenaltyFamily::Polynomial { coefficients: vec![0.0] }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<StoppingProblem> {
        StoppingProblem::from_families(&self.payoff, &self.penalty, self.beta, self.gamma, self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub n_x: usize,
    pub n_y: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid2D> {
        Grid2D::new(self.x_min, self.x_max, self.y_max, self.n_x, self.n_y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterSpec {
    pub xs: Vec<f64>,
    /// Search limit in `y`; the grid height when absent.
    pub y_max: Option<f64>,
    /// Golden-section bracket tolerance; `h_y / 4` when absent.
    pub tol_y: Option<f64>,
    pub tol_conc: f64,
}

impl Default for OuterSpec {
    fn default() -> Self {
        Self { xs: Vec::new(), y_max: None, tol_y: None, tol_conc: TOL_CONC }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub x0: f64,
    /// Initial expected-time budget; the optimizer's `y*` at `x0` when absent.
    pub y0: Option<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub t_cap: f64,
    pub seed: u64,
    pub alpha_source: AlphaSource,
    pub dump_paths: bool,
    pub epsilon_budget: f64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            x0: 0.0,
            y0: None,
            n_paths: s.n_paths,
            dt: s.dt,
            t_cap: s.t_cap,
            seed: s.seed,
            alpha_source: s.alpha_source,
            dump_paths: false,
            epsilon_budget: 0.03,
        }
    }
}

impl SimulateSpec {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_paths: self.n_paths,
            dt: self.dt,
            t_cap: self.t_cap,
            seed: self.seed,
            alpha_source: self.alpha_source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyKind {
    /// Exact value `f(x) - beta y` for a quadratic payoff.
    Quadratic,
    /// Binomial-tree Lagrangian dual.
    TreeDual,
    /// The solver value must not fall below `E[f(x + W_y)]` by more than the tolerance.
    HeatLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCase {
    #[serde(default)]
    pub name: String,
    pub kind: VerifyKind,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_depth() -> usize {
    2048
}

impl VerifyCase {
    pub fn label(&self) -> String {
        if self.name.is_empty() {
            let kind = match self.kind {
                VerifyKind::Quadratic => "quadratic",
                VerifyKind::TreeDual => "tree_dual",
                VerifyKind::HeatLowerBound => "heat_lower_bound",
            };
            format!("{kind}@({},{})", self.x, self.y)
        } else {
            self.name.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub cases: Vec<VerifyCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outer: OuterSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;

    let mut errors = Vec::new();
    check_finite(&toml::Value::Table(table.clone()), "", &mut errors);
    if let Some(problem) = table.get_mut("problem").and_then(|p| p.as_table_mut()) {
        check_family(problem, "payoff", PAYOFF_FAMILIES, &mut errors);
        check_family(problem, "penalty", PENALTY_FAMILIES, &mut errors);
    }
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors.join("; ")));
    }

    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

fn check_finite(value: &toml::Value, path: &str, errors: &mut Vec<String>) {
    match value {
        toml::Value::Float(v) if !v.is_finite() => errors.push(format!("{path}: non-finite number {v}")),
        toml::Value::Array(items) => {
            for (k, item) in items.iter().enumerate() {
                check_finite(item, &format!("{path}[{k}]"), errors);
            }
        }
        toml::Value::Table(t) => {
            for (key, item) in t {
                let child = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                check_finite(item, &child, errors);
            }
        }
        _ => {}
    }
}

/// Normalizes `gaussian-bump` style names and rejects unregistered families
/// with the list of valid ones.
fn check_family(problem: &mut toml::Table, key: &str, registered: &[&str], errors: &mut Vec<String>) {
    let Some(family) = problem.get_mut(key).and_then(|v| v.as_table_mut()).and_then(|t| t.get_mut("family")) else {
        return;
    };
    let Some(name) = family.as_str() else {
        errors.push(format!("problem.{key}.family must be a string"));
        return;
    };
    let normalized = name.replace('-', "_");
    if registered.contains(&normalized.as_str()) {
        *family = toml::Value::String(normalized);
    } else {
        errors.push(format!(
            "problem.{key}.family: unknown {key} family \"{name}\"; registered families: {}",
            registered.join(", ")
        ));
    }
}

impl RunConfig {
    /// Field-level checks beyond what the schema enforces.
    pub fn validate(&self) -> Result<()> {
        let mut errors: Vec<String> = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errors.push(msg);
            }
        };

        let p = &self.problem;
        if let Err(e) = p.payoff.validate() {
            need(false, format!("problem.payoff: {e}"));
        }
        need(p.beta >= 0.0, format!("problem.beta must be nonnegative, got {}", p.beta));
        need(p.gamma >= 0.0, format!("problem.gamma must be nonnegative, got {}", p.gamma));

        let g = &self.grid;
        need(g.y_max > 0.0, format!("grid.y_max must be positive, got {}", g.y_max));
        need(g.x_min < g.x_max, format!("grid.x_min ({}) must be below grid.x_max ({})", g.x_min, g.x_max));
        need(g.n_x >= 3, format!("grid.n_x must be at least 3, got {}", g.n_x));
        need(g.n_y >= 3, format!("grid.n_y must be at least 3, got {}", g.n_y));
        let in_x = |x: f64| x >= g.x_min && x <= g.x_max;

        if let Err(e) = self.solver.validate() {
            need(false, format!("solver: {e}"));
        }

        let o = &self.outer;
        for (k, &x) in o.xs.iter().enumerate() {
            need(in_x(x), format!("outer.xs[{k}] = {x} lies outside [grid.x_min, grid.x_max]"));
        }
        if let Some(y) = o.y_max {
            need(y > 0.0 && y <= g.y_max, format!("outer.y_max must lie in (0, grid.y_max], got {y}"));
        }
        if let Some(t) = o.tol_y {
            need(t > 0.0, format!("outer.tol_y must be positive, got {t}"));
        }
        need(o.tol_conc >= 0.0, format!("outer.tol_conc must be nonnegative, got {}", o.tol_conc));

        let s = &self.simulate;
        need(in_x(s.x0), format!("simulate.x0 = {} lies outside [grid.x_min, grid.x_max]", s.x0));
        if let Some(y0) = s.y0 {
            need(y0 >= 0.0 && y0 <= g.y_max, format!("simulate.y0 must lie in [0, grid.y_max], got {y0}"));
        }
        need(s.n_paths > 0, "simulate.n_paths must be positive".into());
        need(s.dt > 0.0, format!("simulate.dt must be positive, got {}", s.dt));
        need(s.t_cap > 0.0, format!("simulate.t_cap must be positive, got {}", s.t_cap));
        need(s.epsilon_budget >= 0.0, format!("simulate.epsilon_budget must be nonnegative, got {}", s.epsilon_budget));

        for (k, c) in self.verify.cases.iter().enumerate() {
            need(in_x(c.x), format!("verify.cases[{k}].x = {} lies outside the grid", c.x));
            need(c.y >= 0.0 && c.y <= g.y_max, format!("verify.cases[{k}].y must lie in [0, grid.y_max], got {}", c.y));
            need(c.tolerance > 0.0, format!("verify.cases[{k}].tolerance must be positive"));
            need(c.depth >= 1, format!("verify.cases[{k}].depth must be at least 1"));
            if c.kind == VerifyKind::Quadratic {
                need(
                    matches!(p.payoff, PayoffFamily::Quadratic { .. }),
                    format!("verify.cases[{k}]: kind \"quadratic\" needs a quadratic payoff"),
                );
            }
        }

        if errors.is_empty() {
            // Remaining grid constraints (spacing, finiteness).
            self.grid.build().map(|_| ()).map_err(|e| Error::InvalidConfig(format!("grid: {e}")))
        } else {
            Err(Error::InvalidConfig(errors.join("; ")))
        }
    }
}
