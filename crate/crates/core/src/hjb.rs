//! Monotone wide-stencil scheme for
//!
//! ```text
//! u_y - sup_a [ u_xx / 2 + a u_xy + a^2 u_yy / 2 ] = 0,   u(x, 0) = f(x).
//! ```
//!
//! The operator inside the supremum equals `(d_x + a d_y)^2 u / 2`. Restricting
//! the control to the slopes `a_k = k h_y / h_x` makes each directional second
//! difference land on grid nodes:
//!
//! ```text
//! D_k u(i, j) = [u(i+1, j+k) - 2 u(i, j) + u(i-1, j-k)] / h_x^2
//! ```
//!
//! The `y` derivative is upwinded (`(u(i,j) - u(i,j-1)) / h_y`), so the
//! discrete operator is nondecreasing in every neighbour and nonincreasing in
//! the centre value. Lateral columns and the top row carry the value of the
//! deterministic-stop policy as Dirichlet data.
//!
//! Within `k_max` rows of `y = 0` or `y = y_max` a full-length arm would leave
//! the grid. By default such an arm is shortened to where it meets the
//! Dirichlet row and uses the data there, with the usual non-uniform second
//! difference `2/(a+b) [(u_a - u)/a + (u_b - u)/b]`. This keeps the scheme
//! monotone while letting the control reach `k_max` right up to the edge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ValueSurface};
use crate::oracle::{HeatQuadrature, DEFAULT_QUAD_NODES};
use crate::problem::StoppingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClosure {
    #[default]
    HeatValue,
}

/// Treatment of directions whose arms leave the grid through `y = 0` or `y = y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NearBoundary {
    /// Drop them: `|k| <= min(k_max, j, n_y - 1 - j)`.
    Clip,
    /// Shorten them to end on the Dirichlet row.
    #[default]
    BoundaryArms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub k_max: usize,
    pub tol_residual: f64,
    pub max_iters: usize,
    pub cfl_safety: f64,
    pub sweep_mode: SweepMode,
    pub boundary_closure: BoundaryClosure,
    pub near_boundary: NearBoundary,
    /// Gauss-Hermite nodes for the boundary closure.
    pub n_quad: usize,
    /// Record the residual every this many sweeps.
    pub history_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_max: 4,
            tol_residual: 1e-6,
            max_iters: 200_000,
            cfl_safety: 0.9,
            sweep_mode: SweepMode::Jacobi,
            boundary_closure: BoundaryClosure::HeatValue,
            near_boundary: NearBoundary::BoundaryArms,
            n_quad: DEFAULT_QUAD_NODES,
            history_stride: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.tol_residual > 0.0 && self.tol_residual.is_finite()) {
            return Err(Error::InvalidConfig("tol_residual must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidConfig("cfl_safety must lie in (0, 1]".into()));
        }
        if self.history_stride == 0 {
            return Err(Error::InvalidConfig("history_stride must be positive".into()));
        }
        Ok(())
    }

    /// Largest admissible control magnitude on `grid`.
    pub fn alpha_max(&self, grid: &Grid2D) -> f64 {
        self.k_max as f64 * grid.h_y() / grid.h_x()
    }

    /// Pseudo-time step of the Jacobi iteration away from the top and bottom rows.
    pub fn time_step(&self, grid: &Grid2D) -> f64 {
        let hx = grid.h_x();
        self.cfl_safety / (1.0 / grid.h_y() + 2.0 / (hx * hx))
    }
}

/// Per-node Markov control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub grid: Grid2D,
    pub alpha: Vec<f64>,
    pub alpha_max: f64,
}

impl ControlField {
    pub fn constant(grid: Grid2D, alpha: f64) -> Self {
        Self { grid, alpha: vec![alpha; grid.len()], alpha_max: alpha.abs() }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.alpha[self.grid.index(i, j)]
    }

    pub fn sample(&self, x: f64, y: f64) -> Result<f64> {
        self.grid.bilinear(&self.alpha, x, y)
    }

    pub fn as_surface(&self) -> ValueSurface {
        ValueSurface { grid: self.grid, values: self.alpha.clone() }
    }
}

/// Counts of nodes falling outside the growth sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct BoundDiagnostics {
    pub upper_violations: usize,
    pub lower_violations: usize,
    pub max_upper_excess: f64,
    pub max_lower_excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSample {
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub surface: ValueSurface,
    pub control: ControlField,
    /// Deterministic-stop value on every node; also the boundary data.
    pub heat: ValueSurface,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub bound_violations: BoundDiagnostics,
    pub history: Vec<ResidualSample>,
}

/// Slack used by [`bound_diagnostics`] and the acceptance suite.
pub const TOL_BOUND: f64 = 0.05;

fn check_stencil(grid: &Grid2D, i: usize, j: usize, k: i64) -> Result<()> {
    let up = j as i64 + k;
    let down = j as i64 - k;
    let ny = grid.n_y as i64;
    if i == 0 || i + 1 >= grid.n_x || up < 0 || down < 0 || up >= ny || down >= ny {
        return Err(Error::StencilOutOfRange { i, j, k });
    }
    Ok(())
}

/// Second difference of `surface` along `(1, k h_y / h_x)` at node `(i, j)`.
pub fn directional_second_difference(surface: &ValueSurface, i: usize, j: usize, k: i64) -> Result<f64> {
    let g = &surface.grid;
    check_stencil(g, i, j, k)?;
    let hx = g.h_x();
    let up = surface.at(i + 1, (j as i64 + k) as usize);
    let down = surface.at(i - 1, (j as i64 - k) as usize);
    Ok((up - 2.0 * surface.at(i, j) + down) / (hx * hx))
}

/// One end of a directional stencil, `length` measured along `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arm {
    length: f64,
    value: f64,
}

/// Arms that leave the grid through the `y = 0` or `y = y_max` row, for every
/// node of the rows closer than `k_max` to either edge.
#[derive(Debug, Clone)]
struct ArmTable {
    slot_of_row: Vec<Option<usize>>,
    // (up, down) per (slot, i, k)
    entries: Vec<(Option<Arm>, Option<Arm>)>,
}

/// The discrete Hamiltonian on a fixed grid.
///
/// Directions whose arms would leave the grid vertically are either dropped
/// (`on_grid`) or shortened so that they end on the Dirichlet rows, where the
/// data is known at every `x` (`with_boundary`).
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: Grid2D,
    k_max: usize,
    hx: f64,
    inv_hx2: f64,
    inv_hy: f64,
    arms: Option<ArmTable>,
    row_dmax: Vec<f64>,
}

impl Stencil {
    /// Clipped stencil: `|k| <= min(k_max, j, n_y - 1 - j)`.
    pub fn on_grid(grid: Grid2D, config: &SolverConfig) -> Self {
        let hx = grid.h_x();
        Self {
            grid,
            k_max: config.k_max,
            hx,
            inv_hx2: 1.0 / (hx * hx),
            inv_hy: 1.0 / grid.h_y(),
            arms: None,
            row_dmax: vec![1.0 / (hx * hx); grid.n_y],
        }
    }

    /// Full `|k| <= k_max` everywhere, arms truncated at the rows `y = 0` and
    /// `y = y_max` where `bottom` and `top` give the Dirichlet data.
    pub fn with_boundary(
        grid: Grid2D,
        config: &SolverConfig,
        bottom: impl Fn(f64) -> f64,
        top: impl Fn(f64) -> f64,
    ) -> Self {
        let mut st = Self::on_grid(grid, config);
        let kk = config.k_max as i64;
        let ny = grid.n_y as i64;
        let width = (2 * kk + 1) as usize;
        let mut slot_of_row = vec![None; grid.n_y];
        let mut entries = Vec::new();
        let mut slot = 0;
        for j in 1..grid.n_y - 1 {
            let ji = j as i64;
            if ji >= kk && ny - 1 - ji >= kk {
                continue;
            }
            slot_of_row[j] = Some(slot);
            slot += 1;
            let mut dmax = st.inv_hx2;
            for i in 0..grid.n_x {
                let xi = grid.x(i);
                for k in -kk..=kk {
                    // Up arm heads towards (x + h, y + k h_y), down arm towards (x - h, y - k h_y).
                    let cut = |dir: f64, dj: i64| -> Option<Arm> {
                        let target = ji + dj;
                        if (0..ny).contains(&target) {
                            return None;
                        }
                        let (rows, data): (i64, &dyn Fn(f64) -> f64) =
                            if target < 0 { (ji, &bottom) } else { (ny - 1 - ji, &top) };
                        let r = rows as f64 / dj.abs() as f64;
                        Some(Arm { length: r * st.hx, value: data(xi + dir * r * st.hx) })
                    };
                    let up = cut(1.0, k);
                    let down = cut(-1.0, -k);
                    let a = up.map_or(st.hx, |a| a.length);
                    let b = down.map_or(st.hx, |a| a.length);
                    if i > 0 && i + 1 < grid.n_x {
                        dmax = dmax.max(1.0 / (a * b));
                    }
                    entries.push((up, down));
                }
            }
            st.row_dmax[j] = dmax;
        }
        debug_assert_eq!(entries.len(), slot * grid.n_x * width);
        st.arms = Some(ArmTable { slot_of_row, entries });
        st
    }

    /// Stencil selected by `config.near_boundary` for `problem`.
    pub fn for_problem(problem: &StoppingProblem, grid: Grid2D, config: &SolverConfig) -> Result<Self> {
        Ok(match config.near_boundary {
            NearBoundary::Clip => Self::on_grid(grid, config),
            NearBoundary::BoundaryArms => {
                let quad = HeatQuadrature::new(config.n_quad)?;
                Self::with_boundary(grid, config, |x| problem.payoff(x), |x| {
                    quad.expect(|z| problem.payoff(z), x, grid.y_max)
                })
            }
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Largest centre coefficient of `H` in row `j`.
    pub fn row_dmax(&self, j: usize) -> f64 {
        self.row_dmax[j]
    }

    /// `(A, d, scale)` with `D_k u / 2 = A - d u(i, j)`, or `None` when the
    /// direction is not available at this node.
    #[inline]
    fn direction(&self, values: &[f64], i: usize, j: usize, k: i64) -> Option<(f64, f64, f64)> {
        let g = &self.grid;
        let ny = g.n_y as i64;
        let up_row = j as i64 + k;
        let down_row = j as i64 - k;
        let up_in = (0..ny).contains(&up_row);
        let down_in = (0..ny).contains(&down_row);
        if up_in && down_in {
            let a = values[(i + 1) * g.n_y + up_row as usize];
            let b = values[(i - 1) * g.n_y + down_row as usize];
            return Some((0.5 * (a + b) * self.inv_hx2, self.inv_hx2, a.abs().max(b.abs())));
        }
        let table = self.arms.as_ref()?;
        let slot = table.slot_of_row[j]?;
        let width = 2 * self.k_max + 1;
        let (up, down) = table.entries[(slot * g.n_x + i) * width + (k + self.k_max as i64) as usize];
        let up = if up_in {
            Arm { length: self.hx, value: values[(i + 1) * g.n_y + up_row as usize] }
        } else {
            up?
        };
        let down = if down_in {
            Arm { length: self.hx, value: values[(i - 1) * g.n_y + down_row as usize] }
        } else {
            down?
        };
        let (a, b) = (up.length, down.length);
        let big_a = (up.value / a + down.value / b) / (a + b);
        Some((big_a, 1.0 / (a * b), up.value.abs().max(down.value.abs())))
    }

    #[inline]
    fn k_range(&self, j: usize) -> i64 {
        match self.arms {
            Some(_) => self.k_max as i64,
            None => self.k_max.min(j).min(self.grid.n_y - 1 - j) as i64,
        }
    }

    /// `max_k D_k u / 2` and its maximizer. Near-ties (within rounding of the
    /// stencil values) prefer the smallest `|k|`, then the negative offset.
    #[inline]
    fn hamiltonian_at(&self, values: &[f64], i: usize, j: usize) -> (f64, i64) {
        let u = values[self.grid.index(i, j)];
        let kk = self.k_range(j);
        let mut best = f64::NEG_INFINITY;
        let mut scale = u.abs();
        for k in -kk..=kk {
            if let Some((a, d, s)) = self.direction(values, i, j, k) {
                best = best.max(a - d * u);
                scale = scale.max(s);
            }
        }
        let tie = 1e-12 * (1.0 + scale) * self.row_dmax[j];
        for m in 0..=kk {
            for k in [-m, m] {
                if let Some((a, d, _)) = self.direction(values, i, j, k) {
                    if a - d * u >= best - tie {
                        return (best, k);
                    }
                }
            }
        }
        (best, 0)
    }

    #[inline]
    fn residual_at(&self, values: &[f64], i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let (h, _) = self.hamiltonian_at(values, i, j);
        h - (values[g.index(i, j)] - values[g.index(i, j - 1)]) * self.inv_hy
    }

    /// Value of `u(i, j)` that zeroes the residual with the neighbours frozen.
    /// Each direction gives an affine residual decreasing in `u(i, j)`, so the
    /// root of their maximum is the largest individual root.
    #[inline]
    fn solve_at(&self, values: &[f64], i: usize, j: usize) -> f64 {
        let below = values[self.grid.index(i, j - 1)] * self.inv_hy;
        let kk = self.k_range(j);
        let mut best = f64::NEG_INFINITY;
        for k in -kk..=kk {
            if let Some((a, d, _)) = self.direction(values, i, j, k) {
                best = best.max((a + below) / (d + self.inv_hy));
            }
        }
        best
    }

    pub fn hamiltonian(&self, surface: &ValueSurface, i: usize, j: usize) -> Result<(f64, i64)> {
        if !self.grid.is_interior(i, j) {
            return Err(Error::StencilOutOfRange { i, j, k: 0 });
        }
        Ok(self.hamiltonian_at(&surface.values, i, j))
    }

    /// `H(u) - D_y^- u` on interior nodes; zero elsewhere.
    pub fn residual(&self, surface: &ValueSurface) -> ValueSurface {
        let g = self.grid;
        ValueSurface {
            grid: g,
            values: (0..g.len())
                .into_par_iter()
                .map(|idx| {
                    let (i, j) = (idx / g.n_y, idx % g.n_y);
                    if g.is_interior(i, j) { self.residual_at(&surface.values, i, j) } else { 0.0 }
                })
                .collect(),
        }
    }

    /// Sup-norm of the residual over interior nodes; NaN if any entry is NaN.
    pub fn residual_norm(&self, values: &[f64]) -> f64 {
        let g = self.grid;
        (1..g.n_x - 1)
            .into_par_iter()
            .map(|i| {
                (1..g.n_y - 1).fold(0.0f64, |m, j| nan_max(m, self.residual_at(values, i, j).abs()))
            })
            .reduce(|| 0.0, nan_max)
    }

    /// Argmax control `k h_y / h_x` at interior nodes, zero on the boundary.
    pub fn argmax_control(&self, surface: &ValueSurface, alpha_max: f64) -> ControlField {
        let g = self.grid;
        let slope = g.h_y() / g.h_x();
        let alpha = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / g.n_y, idx % g.n_y);
                if g.is_interior(i, j) {
                    self.hamiltonian_at(&surface.values, i, j).1 as f64 * slope
                } else {
                    0.0
                }
            })
            .collect();
        ControlField { grid: g, alpha, alpha_max }
    }
}

#[inline]
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) }
}

/// `sup_k D_k u / 2` at an interior node with the clipped on-grid stencil,
/// and the maximizing offset `k`.
pub fn hamiltonian(surface: &ValueSurface, i: usize, j: usize, config: &SolverConfig) -> Result<(f64, i64)> {
    Stencil::on_grid(surface.grid, config).hamiltonian(surface, i, j)
}

/// Residual of the clipped on-grid scheme; see [`Stencil::residual`].
pub fn residual(surface: &ValueSurface, config: &SolverConfig) -> ValueSurface {
    Stencil::on_grid(surface.grid, config).residual(surface)
}

pub fn sup_norm_interior(field: &ValueSurface) -> f64 {
    let g = &field.grid;
    let mut m = 0.0f64;
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            m = m.max(field.at(i, j).abs());
        }
    }
    m
}

/// One relaxation sweep of the scheme over the interior nodes.
#[derive(Debug, Clone)]
pub struct Sweeper {
    stencil: Stencil,
    mode: SweepMode,
    // Jacobi pseudo-time step per row.
    dt: Vec<f64>,
}

impl Sweeper {
    pub fn new(stencil: Stencil, config: &SolverConfig) -> Self {
        let inv_hy = 1.0 / stencil.grid.h_y();
        let dt = (0..stencil.grid.n_y)
            .map(|j| config.cfl_safety / (inv_hy + 2.0 * stencil.row_dmax(j)))
            .collect();
        Self { stencil, mode: config.sweep_mode, dt }
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Applies one sweep in place and returns the sup-norm of the residual of
    /// the surface as it was before the sweep (Jacobi) or after it (Gauss-Seidel).
    pub fn sweep(&self, surface: &mut ValueSurface) -> f64 {
        match self.mode {
            SweepMode::Jacobi => self.jacobi(surface),
            SweepMode::GaussSeidel => {
                self.gauss_seidel(surface);
                self.stencil.residual_norm(&surface.values)
            }
        }
    }

    fn jacobi(&self, surface: &mut ValueSurface) -> f64 {
        let g = self.stencil.grid;
        let ny = g.n_y;
        let old = &surface.values;
        let mut next = old.clone();
        let norm = next
            .par_chunks_mut(ny)
            .enumerate()
            .map(|(i, column)| {
                if i == 0 || i + 1 == g.n_x {
                    return 0.0;
                }
                let mut m = 0.0f64;
                for j in 1..ny - 1 {
                    let r = self.stencil.residual_at(old, i, j);
                    column[j] = old[i * ny + j] + self.dt[j] * r;
                    m = nan_max(m, r.abs());
                }
                m
            })
            .reduce(|| 0.0, nan_max);
        surface.values = next;
        norm
    }

    /// Exact nodal solves in row-major ascending order (by `j`, then `i`).
    fn gauss_seidel(&self, surface: &mut ValueSurface) {
        let g = self.stencil.grid;
        let values = &mut surface.values;
        for j in 1..g.n_y - 1 {
            for i in 1..g.n_x - 1 {
                let v = self.stencil.solve_at(values, i, j);
                values[g.index(i, j)] = v;
            }
        }
    }
}

/// Dirichlet data and initial iterate: `f` on `y = 0`, the deterministic-stop
/// value elsewhere.
pub fn heat_closure(problem: &StoppingProblem, grid: Grid2D, n_quad: usize) -> Result<ValueSurface> {
    let quad = HeatQuadrature::new(n_quad)?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid.n_y, idx % grid.n_y);
            let x = grid.x(i);
            if j == 0 {
                problem.payoff(x)
            } else {
                quad.expect(|z| problem.payoff(z), x, grid.y(j))
            }
        })
        .collect();
    for (idx, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "boundary closure", location: grid.x(idx / grid.n_y) });
        }
    }
    Ok(ValueSurface { grid, values })
}

pub fn bound_diagnostics(surface: &ValueSurface, heat: &ValueSurface, problem: &StoppingProblem, tol: f64) -> BoundDiagnostics {
    let g = surface.grid;
    let mut d = BoundDiagnostics::default();
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            let (x, y) = g.node(i, j);
            let w = surface.at(i, j);
            let up = w - problem.value_upper_bound(x, y);
            let low = heat.at(i, j) - w;
            if up > tol {
                d.upper_violations += 1;
            }
            if low > tol {
                d.lower_violations += 1;
            }
            d.max_upper_excess = d.max_upper_excess.max(up);
            d.max_lower_excess = d.max_lower_excess.max(low);
        }
    }
    d
}

pub fn solve(problem: &StoppingProblem, grid: Grid2D, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let heat = match config.boundary_closure {
        BoundaryClosure::HeatValue => heat_closure(problem, grid, config.n_quad)?,
    };
    let mut surface = heat.clone();
    let sweeper = Sweeper::new(Stencil::for_problem(problem, grid, config)?, config);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let mut res = sweeper.stencil().residual_norm(&surface.values);
    history.push(ResidualSample { iteration: 0, residual: res });
    if res <= config.tol_residual {
        converged = true;
    }
    while !converged && iterations < config.max_iters {
        let reported = sweeper.sweep(&mut surface);
        iterations += 1;
        if let Some(idx) = surface.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::SolverBlowup { i: idx / grid.n_y, j: idx % grid.n_y, sweep: iterations });
        }
        res = match config.sweep_mode {
            // Jacobi reports the residual of the previous iterate.
            SweepMode::Jacobi if reported <= config.tol_residual => {
                sweeper.stencil().residual_norm(&surface.values)
            }
            SweepMode::Jacobi => reported,
            SweepMode::GaussSeidel => reported,
        };
        if res.is_nan() {
            return Err(Error::SolverBlowup { i: 0, j: 0, sweep: iterations });
        }
        if iterations % config.history_stride == 0 {
            history.push(ResidualSample { iteration: iterations, residual: res });
        }
        converged = res <= config.tol_residual;
    }
    if history.last().map(|h| h.iteration) != Some(iterations) {
        history.push(ResidualSample { iteration: iterations, residual: res });
    }

    let control = sweeper.stencil().argmax_control(&surface, config.alpha_max(&grid));
    let bound_violations = bound_diagnostics(&surface, &heat, problem, TOL_BOUND);
    Ok(SolveResult {
        surface,
        control,
        heat,
        iterations,
        final_residual: res,
        converged,
        bound_violations,
        history,
    })
}

/// Central-difference derivatives at an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralDerivatives {
    pub u_y: f64,
    pub u_xx: f64,
    pub u_xy: f64,
    pub u_yy: f64,
}

pub fn central_derivatives(surface: &ValueSurface, i: usize, j: usize) -> CentralDerivatives {
    let g = &surface.grid;
    let (hx, hy) = (g.h_x(), g.h_y());
    let u = |a: usize, b: usize| surface.at(a, b);
    CentralDerivatives {
        u_y: (u(i, j + 1) - u(i, j - 1)) / (2.0 * hy),
        u_xx: (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) / (hx * hx),
        u_yy: (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) / (hy * hy),
        u_xy: (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) / (4.0 * hx * hy),
    }
}

/// `2 u_y u_yy - det D^2 u` at interior nodes; zero elsewhere.
pub fn monge_ampere_residual(surface: &ValueSurface) -> ValueSurface {
    let g = surface.grid;
    let mut out = ValueSurface { grid: g, values: vec![0.0; g.len()] };
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            let d = central_derivatives(surface, i, j);
            out.set(i, j, 2.0 * d.u_y * d.u_yy - (d.u_xx * d.u_yy - d.u_xy * d.u_xy));
        }
    }
    out
}
