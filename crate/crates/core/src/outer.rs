//! Maximization of `y -> w(x, y) + g(y)` over `[0, y_max]`.

use serde::Serialize;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{fmt_num, ValueSurface};
use crate::problem::StoppingProblem;

/// Default concavity slack on raw second differences, relative to `1 + |value|`.
pub const TOL_CONC: f64 = 1e-3;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterResult {
    pub x: f64,
    pub y_star: f64,
    pub v: f64,
    pub bracket_width_final: f64,
    pub concavity_certificate: bool,
    /// The objective provably stays below `v` for every `y > y_max`.
    pub truncation_certified: bool,
    /// `x` lies within two cells of a lateral boundary.
    pub near_edge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterOptions {
    pub tol_y: f64,
    pub tol_conc: f64,
}

/// Maximizes `w_slice + g` on `[0, y_max]`.
///
/// `scan` holds the sample abscissae used for the concavity certificate and
/// for the exhaustive fallback when the certificate fails.
pub fn maximize_over_y(
    w_slice: impl Fn(f64) -> Result<f64>,
    g: impl Fn(f64) -> f64,
    y_max: f64,
    scan: &[f64],
    options: OuterOptions,
) -> Result<OuterResult> {
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::InvalidConfig(format!("y_max must be positive, got {y_max}")));
    }
    if !(options.tol_y > 0.0) {
        return Err(Error::InvalidConfig(format!("tol_y must be positive, got {}", options.tol_y)));
    }
    let objective = |y: f64| -> Result<f64> {
        let v = w_slice(y)? + g(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "outer objective", location: y })
        }
    };

    let samples: Vec<(f64, f64)> = scan
        .iter()
        .filter(|&&y| (0.0..=y_max).contains(&y))
        .map(|&y| objective(y).map(|v| (y, v)))
        .collect::<Result<_>>()?;
    let concave = samples
        .windows(3)
        .all(|w| w[2].1 - 2.0 * w[1].1 + w[0].1 <= options.tol_conc * (1.0 + w[1].1.abs()));

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let bracket;
    if concave {
        let (mut a, mut b) = (0.0, y_max);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = objective(c)?;
        let mut fd = objective(d)?;
        while b - a > options.tol_y {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = objective(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = objective(d)?;
            }
        }
        let mid = 0.5 * (a + b);
        candidates.push((mid, objective(mid)?));
        bracket = b - a;
    } else {
        candidates.extend(samples.iter().copied());
        bracket = samples
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(0.0f64, f64::max);
    }
    candidates.push((0.0, objective(0.0)?));
    candidates.push((y_max, objective(y_max)?));

    // Best value; near-ties go to the smallest y.
    let best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-12 * (1.0 + best.abs());
    let (y_star, v) = candidates
        .iter()
        .filter(|c| c.1 >= best - tie)
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .copied()
        .expect("candidate set is nonempty");

    Ok(OuterResult {
        x: 0.0,
        y_star,
        v,
        bracket_width_final: bracket,
        concavity_certificate: concave,
        truncation_certified: false,
        near_edge: false,
    })
}

/// Whether `sup_{y >= y_max} [w(x, y) + g(y)] <= v` follows from the bound
/// `w(x, y) + g(y) <= gamma (1 + |x|) - beta x^2 + gamma sqrt(y) + (lambda - beta) y`.
pub fn truncation_certified(problem: &StoppingProblem, x: f64, y_max: f64, v: f64) -> bool {
    let slope = problem.lambda - problem.beta;
    if slope >= 0.0 {
        return false;
    }
    let gamma = problem.gamma;
    let bound = |y: f64| gamma * (1.0 + x.abs()) - problem.beta * x * x + gamma * y.sqrt() + slope * y;
    // The bound is concave in y with its peak at gamma^2 / (4 slope^2).
    let peak = gamma * gamma / (4.0 * slope * slope);
    bound(y_max.max(peak)) <= v
}

/// `v(x)` and the maximizing `y` at every requested `x`.
pub fn value_function(
    problem: &StoppingProblem,
    surface: &ValueSurface,
    xs: &[f64],
    y_max: Option<f64>,
    options: OuterOptions,
) -> Vec<Result<OuterResult>> {
    let grid = surface.grid;
    let y_max = y_max.unwrap_or(grid.y_max).min(grid.y_max);
    let scan: Vec<f64> = (0..grid.n_y).map(|j| grid.y(j)).filter(|&y| y <= y_max).collect();
    let margin = 2.0 * grid.h_x();
    xs.iter()
        .map(|&x| {
            if !(x >= grid.x_min && x <= grid.x_max) {
                return Err(Error::OutOfGrid { x, y: 0.0 });
            }
            let mut r = maximize_over_y(|y| surface.sample(x, y), |y| problem.penalty(y), y_max, &scan, options)?;
            r.x = x;
            r.near_edge = x < grid.x_min + margin || x > grid.x_max - margin;
            r.truncation_certified = truncation_certified(problem, x, y_max, r.v);
            Ok(r)
        })
        .collect()
}

/// CSV with header `x,y_star,v,concave_ok`.
pub fn results_to_csv(results: &[OuterResult]) -> String {
    let mut out = String::from("x,y_star,v,concave_ok\n");
    for r in results {
        let _ = writeln!(out, "{},{},{},{}", fmt_num(r.x), fmt_num(r.y_star), fmt_num(r.v), r.concavity_certificate);
    }
    out
}
