//! Independent reference values used to check the PDE solver.
//!
//! * [`quadratic_oracle`]: for `f(x) = -beta x^2 + b x + c` every stopping
//!   time with `E[tau] = y` earns exactly `f(x) - beta y`.
//! * [`heat_value`]: the value `E[f(x + sqrt(y) Z)]` of stopping at the
//!   deterministic time `y`, by Gauss-Hermite quadrature.
//! * [`tree_dual`]: the expectation-constrained stopping problem on a
//!   recombining binomial walk, solved through its scalar Lagrangian dual.

use gauss_quad::GaussHermite;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_QUAD_NODES: usize = 32;

pub fn quadratic_oracle(beta: f64, b: f64, c: f64, x: f64, y: f64) -> f64 {
    (-beta * x * x + b * x + c) - beta * y
}

/// Gauss-Hermite rule rescaled to expectations over a standard normal.
#[derive(Debug, Clone)]
pub struct HeatQuadrature {
    nodes: Vec<(f64, f64)>,
}

impl HeatQuadrature {
    pub fn new(n_quad: usize) -> Result<Self> {
        if n_quad < 8 {
            return Err(Error::Oracle(format!("need at least 8 quadrature nodes, got {n_quad}")));
        }
        let rule = GaussHermite::new(n_quad).map_err(|e| Error::Oracle(e.to_string()))?;
        let norm = 1.0 / PI.sqrt();
        let mut nodes: Vec<(f64, f64)> = rule
            .iter()
            .map(|&(t, w)| (std::f64::consts::SQRT_2 * t, w * norm))
            .collect();
        // Fixed summation order independent of the eigen-solver output order.
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { nodes })
    }

    /// `E[f(x + sqrt(y) Z)]`, exactly `f(x)` at `y = 0`.
    pub fn expect(&self, f: impl Fn(f64) -> f64, x: f64, y: f64) -> f64 {
        if y <= 0.0 {
            return f(x);
        }
        let s = y.sqrt();
        self.nodes.iter().map(|&(z, w)| w * f(x + s * z)).sum()
    }
}

pub fn heat_value(f: impl Fn(f64) -> f64, x: f64, y: f64, n_quad: usize) -> Result<f64> {
    Ok(HeatQuadrature::new(n_quad)?.expect(f, x, y))
}

/// Value of the unconstrained stopping problem with running cost `eta` per
/// unit time on the walk `x + sum(+-sqrt(dt))`, stopped no later than `depth`.
pub fn tree_dp(f: impl Fn(f64) -> f64, eta: f64, x: f64, depth: usize, dt: f64) -> f64 {
    BinomialTree::new(f, x, depth, dt).solve(eta).value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSolution {
    pub value: f64,
    /// Expected stopping time when ties are resolved towards stopping.
    pub tau_min: f64,
    /// Expected stopping time when ties are resolved towards continuing.
    pub tau_max: f64,
}

/// Recombining walk with the payoff precomputed on every reachable lattice point.
#[derive(Debug, Clone)]
pub struct BinomialTree {
    depth: usize,
    dt: f64,
    // payoff at x + (p - depth) sqrt(dt), p = 0..=2 depth
    payoff: Vec<f64>,
}

impl BinomialTree {
    pub fn new(f: impl Fn(f64) -> f64, x: f64, depth: usize, dt: f64) -> Self {
        let step = dt.sqrt();
        let payoff = (0..=2 * depth)
            .map(|p| f(x + (p as f64 - depth as f64) * step))
            .collect();
        Self { depth, dt, payoff }
    }

    pub fn horizon(&self) -> f64 {
        self.depth as f64 * self.dt
    }

    /// Backward induction for payoff `f - eta * t`.
    pub fn solve(&self, eta: f64) -> TreeSolution {
        let n = self.depth;
        // Level k node m sits at lattice point 2m - k + depth.
        let t_end = self.horizon();
        let mut value: Vec<f64> = (0..=n).map(|m| self.payoff[2 * m] - eta * t_end).collect();
        let mut tmin = vec![t_end; n + 1];
        let mut tmax = vec![t_end; n + 1];
        for k in (0..n).rev() {
            let t = k as f64 * self.dt;
            for m in 0..=k {
                let stop = self.payoff[2 * m + n - k] - eta * t;
                let cont = 0.5 * (value[m] + value[m + 1]);
                let cont_min = 0.5 * (tmin[m] + tmin[m + 1]);
                let cont_max = 0.5 * (tmax[m] + tmax[m + 1]);
                if stop > cont {
                    value[m] = stop;
                    tmin[m] = t;
                    tmax[m] = t;
                } else if stop < cont {
                    value[m] = cont;
                    tmin[m] = cont_min;
                    tmax[m] = cont_max;
                } else {
                    value[m] = stop;
                    tmin[m] = t;
                    tmax[m] = cont_max;
                }
            }
        }
        TreeSolution { value: value[0], tau_min: tmin[0], tau_max: tmax[0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub eta_star: Option<f64>,
    pub dual_gap_note: String,
}

const BRACKET_DOUBLINGS: usize = 8;

/// `min_eta [tree_dp(f, eta) + eta y]`, the tree analogue of the
/// expectation-constrained value at `(x, y)`.
pub fn tree_dual(
    f: impl Fn(f64) -> f64,
    x: f64,
    y: f64,
    depth: usize,
    dt: f64,
    eta_bracket: (f64, f64),
    tol: f64,
) -> Result<OracleResult> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Oracle(format!("dt must be positive, got {dt}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Oracle(format!("tol must be positive, got {tol}")));
    }
    let tree = BinomialTree::new(f, x, depth, dt);
    let horizon = tree.horizon();
    let slack = 1e-12 * horizon.max(1.0);
    if !(y >= 0.0) || y > horizon + slack {
        return Err(Error::Oracle(format!(
            "expected time {y} is infeasible on a tree of horizon {horizon}"
        )));
    }
    let (mut lo, mut hi) = eta_bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Oracle(format!("bad multiplier bracket ({lo}, {hi})")));
    }

    // The dual is convex with subdifferential [y - tau_max, y - tau_min].
    let mut doublings = 0;
    loop {
        let left_ok = tree.solve(lo).tau_min >= y - slack;
        let right_ok = tree.solve(hi).tau_max <= y + slack;
        if left_ok && right_ok {
            break;
        }
        if doublings == BRACKET_DOUBLINGS {
            return Err(Error::Oracle(format!(
                "multiplier bracket ({lo}, {hi}) still excludes the minimizer after {BRACKET_DOUBLINGS} doublings"
            )));
        }
        let width = hi - lo;
        if !left_ok {
            lo -= width;
        }
        if !right_ok {
            hi += width;
        }
        doublings += 1;
    }

    let dual = |eta: f64| tree.solve(eta).value + eta * y;
    while hi - lo > tol {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dual(m1) <= dual(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let eta_star = 0.5 * (lo + hi);
    Ok(OracleResult {
        value: dual(eta_star),
        eta_star: Some(eta_star),
        dual_gap_note: "dual value equals the concave envelope in y of the randomized-stopping value on the tree"
            .to_string(),
    })
}
