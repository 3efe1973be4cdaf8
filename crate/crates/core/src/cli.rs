//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or violated
//! assumptions, 3 solver did not converge, 4 a verify case failed. Errors and
//! warnings go to standard error as one JSON object per line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_config, RunConfig, VerifyKind};
use crate::error::Error;
use crate::grid::Grid2D;
use crate::hjb::{solve, SolveResult};
use crate::oracle::{heat_value, quadratic_oracle, tree_dual};
use crate::outer::{results_to_csv, value_function, OuterOptions, OuterResult};
use crate::policy::{certify, paths_to_csv, policy_control, simulate_paths};
use crate::problem::{linspace, validate_problem_with, PayoffFamily, StoppingProblem, ValidationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tistop", version, about = "Optimal stopping with a nonlinear penalty on the expected stopping time")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve for w(x, y) and write the surface, control and convergence log.
    Solve,
    /// Solve, then maximize w(x, y) + g(y) over y at the configured xs.
    Optimize,
    /// Solve, optimize at x0 and simulate the feedback policy.
    Simulate,
    /// Compare solver values against the configured oracle cases.
    Verify,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    #[arg(long, global = true)]
    pub tol_residual: Option<f64>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub cfl_safety: Option<f64>,
}

/// A failed run: exit code plus the JSON written to standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub detail: serde_json::Value,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into(), detail: serde_json::Value::Null }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind, "message": self.message, "exit_code": self.code });
        if !self.detail.is_null() {
            v["detail"] = self.detail.clone();
        }
        v
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidConfig(_) => (EXIT_VALIDATION, "invalid_config"),
            Error::InvalidGrid(_) => (EXIT_VALIDATION, "invalid_grid"),
            Error::InvalidProblem(_) => (EXIT_VALIDATION, "invalid_problem"),
            Error::OutOfGrid { .. } => (EXIT_VALIDATION, "out_of_grid"),
            Error::StencilOutOfRange { .. } => (EXIT_VALIDATION, "stencil_out_of_range"),
            Error::NonFinite { .. } => (EXIT_FAILURE, "non_finite"),
            Error::SolverBlowup { .. } => (EXIT_FAILURE, "solver_blowup"),
            Error::PathNotFinite { .. } => (EXIT_FAILURE, "path_not_finite"),
            Error::Oracle(_) => (EXIT_FAILURE, "oracle"),
            Error::Io(_) => (EXIT_FAILURE, "io"),
        };
        Failure::new(code, kind, e.to_string())
    }
}

fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("{}", json!({ "error": "usage", "message": e.to_string(), "exit_code": EXIT_VALIDATION }));
                return EXIT_VALIDATION;
            }
            print!("{e}");
            return EXIT_OK;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, Failure> {
    let path = cli
        .common
        .config
        .as_deref()
        .ok_or_else(|| Failure::new(EXIT_VALIDATION, "usage", "--config PATH is required"))?;
    let mut config = parse_config(path)?;
    apply_overrides(&mut config, &cli.common);
    config.validate()?;
    let out = cli.common.out.clone().unwrap_or_else(|| config.output_dir.clone());

    let threads = match cli.common.threads {
        Some(0) => return Err(Failure::new(EXIT_VALIDATION, "usage", "--threads must be at least 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::new(EXIT_FAILURE, "threads", e.to_string()))?;
    pool.install(|| execute(cli.command, &config, &out))
}

/// Flags take precedence over config scalars.
pub fn apply_overrides(config: &mut RunConfig, args: &CommonArgs) {
    if let Some(s) = args.seed {
        config.simulate.seed = s;
    }
    if let Some(k) = args.k_max {
        config.solver.k_max = k;
    }
    if let Some(t) = args.tol_residual {
        config.solver.tol_residual = t;
    }
    if let Some(m) = args.max_iters {
        config.solver.max_iters = m;
    }
    if let Some(c) = args.cfl_safety {
        config.solver.cfl_safety = c;
    }
}

pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<i32, Failure> {
    let (problem, grid, report) = prepare(config)?;
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let solved = solve(&problem, grid, &config.solver)?;
    if !solved.converged {
        warn(&format!(
            "solver stopped after {} sweeps with residual {:e} above tolerance {:e}",
            solved.iterations, solved.final_residual, config.solver.tol_residual
        ));
    }
    write_json(out, "solve_log.json", &solve_log(config, &solved, &report))?;
    let status = if solved.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };

    match command {
        Command::Solve => {
            write(out, "surface.csv", &solved.surface.to_csv())?;
            write_json(out, "surface.json", &solved.surface.to_json())?;
            let control = solved.control.as_surface();
            write(out, "control.csv", &control.to_csv())?;
            write_json(out, "control.json", &control.to_json())?;
            Ok(status)
        }
        Command::Optimize => {
            let results = optimize(config, &problem, &solved, &config.outer.xs)?;
            write(out, "value_function.csv", &results_to_csv(&results))?;
            write_json(out, "value_function.json", &results)?;
            Ok(status)
        }
        Command::Simulate => {
            let spec = &config.simulate;
            let outer = optimize(config, &problem, &solved, &[spec.x0])?.remove(0);
            let y0 = spec.y0.unwrap_or(outer.y_star);
            let control = policy_control(&solved, spec.alpha_source);
            let (sim, records) = simulate_paths(&problem, &control, spec.x0, y0, &spec.sim_config())?;
            if sim.capped_flagged() {
                warn(&format!("{:.4}% of paths hit t_cap", 100.0 * sim.capped_fraction));
            }
            let cert = certify(&problem, &outer, &sim, spec.epsilon_budget);
            let mut sim_json = serde_json::to_value(sim).expect("serializable");
            sim_json["x0"] = json!(spec.x0);
            sim_json["y0"] = json!(y0);
            sim_json["seed"] = json!(spec.seed);
            write_json(out, "simulation.json", &sim_json)?;
            let mut cert_json = serde_json::to_value(&cert).expect("serializable");
            cert_json["y_star"] = json!(outer.y_star);
            write_json(out, "certificate.json", &cert_json)?;
            if spec.dump_paths {
                write(out, "paths.csv", &paths_to_csv(&records))?;
            }
            Ok(status)
        }
        Command::Verify => {
            let rows = verify(config, &problem, &solved)?;
            let all_pass = rows.iter().all(|r| r.pass);
            write_json(
                out,
                "verify_report.json",
                &json!({ "solver_converged": solved.converged, "all_pass": all_pass, "cases": rows }),
            )?;
            if !all_pass {
                let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.case.as_str()).collect();
                let mut f = Failure::new(EXIT_VERIFY_FAILED, "verify_failed", format!("failed cases: {}", failed.join(", ")));
                f.detail = json!(failed);
                return Err(f);
            }
            Ok(status)
        }
    }
}

/// Builds the problem and grid and runs the assumption checks on the grid
/// nodes. Coercivity only warns; the other checks are fatal unless allowed.
pub fn prepare(config: &RunConfig) -> Result<(StoppingProblem, Grid2D, ValidationReport), Failure> {
    let problem = config.problem.build()?;
    let grid = config.grid.build()?;
    let xs = linspace(grid.x_min, grid.x_max, grid.n_x);
    let ys = linspace(0.0, grid.y_max, grid.n_y);
    let report = validate_problem_with(&problem, &xs, &ys, config.problem.validation)?;
    if !report.coercivity_ok {
        warn(&format!("coercivity margin {} is not positive", report.coercivity_margin));
    }
    let structural = report.growth_ok && report.penalty_bound_ok && report.g_concave_ok;
    if !structural {
        if config.problem.allow_assumption_violations {
            warn(&report.notes);
        } else {
            let mut f = Failure::new(EXIT_VALIDATION, "assumption_violation", report.notes.clone());
            f.detail = serde_json::to_value(&report).expect("serializable");
            return Err(f);
        }
    }
    Ok((problem, grid, report))
}

fn solve_log(config: &RunConfig, solved: &SolveResult, report: &ValidationReport) -> serde_json::Value {
    json!({
        "converged": solved.converged,
        "iterations": solved.iterations,
        "final_residual": solved.final_residual,
        "tol_residual": config.solver.tol_residual,
        "history": solved.history,
        "bound_violations": solved.bound_violations,
        "validation": report,
        "solver": config.solver,
        "grid": config.grid,
    })
}

fn optimize(
    config: &RunConfig,
    problem: &StoppingProblem,
    solved: &SolveResult,
    xs: &[f64],
) -> Result<Vec<OuterResult>, Failure> {
    let grid = solved.surface.grid;
    let options = OuterOptions {
        tol_y: config.outer.tol_y.unwrap_or(grid.h_y() / 4.0),
        tol_conc: config.outer.tol_conc,
    };
    let results = value_function(problem, &solved.surface, xs, config.outer.y_max, options)
        .into_iter()
        .collect::<crate::error::Result<Vec<_>>>()?;
    for r in &results {
        if !r.concavity_certificate {
            warn(&format!("objective at x = {} failed the concavity check; used the grid scan", r.x));
        }
        if r.near_edge {
            warn(&format!("x = {} lies within two cells of the lateral boundary", r.x));
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub case: String,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn verify(config: &RunConfig, problem: &StoppingProblem, solved: &SolveResult) -> Result<Vec<VerifyRow>, Failure> {
    let mut rows = Vec::with_capacity(config.verify.cases.len());
    for case in &config.verify.cases {
        let solver_value = solved.surface.sample(case.x, case.y)?;
        let f = |z: f64| problem.payoff(z);
        let oracle_value = match case.kind {
            VerifyKind::Quadratic => match config.problem.payoff {
                PayoffFamily::Quadratic { a, b, c } => quadratic_oracle(-a, b, c, case.x, case.y),
                _ => unreachable!("rejected by config validation"),
            },
            VerifyKind::TreeDual => {
                if case.y == 0.0 {
                    problem.payoff(case.x)
                } else {
                    tree_dual(f, case.x, case.y, case.depth, case.y / case.depth as f64, (-1.0, 1.0), 1e-9)?.value
                }
            }
            VerifyKind::HeatLowerBound => heat_value(f, case.x, case.y, config.solver.n_quad)?,
        };
        let abs_diff = (solver_value - oracle_value).abs();
        let pass = match case.kind {
            VerifyKind::HeatLowerBound => solver_value >= oracle_value - case.tolerance,
            _ => abs_diff <= case.tolerance,
        };
        rows.push(VerifyRow { case: case.label(), solver_value, oracle_value, abs_diff, tolerance: case.tolerance, pass });
    }
    Ok(rows)
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_FAILURE, "io", format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(dir, name, &text)
}
