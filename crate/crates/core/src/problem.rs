//! Problem instances: payoff `f`, penalty `g` on the expected stopping time,
//! and the growth constants that the solver bounds rely on.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in payoff families selectable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffFamily {
    /// `a x^2 + b x + c`
    Quadratic {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
    },
    /// `amplitude * exp(-((x - center) / width)^2) + offset`
    GaussianBump {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `height * max(0, 1 - |x - center| / half_width)`
    Hat {
        #[serde(default = "one")]
        height: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        half_width: f64,
    },
    /// Linear interpolation through the knots, constant beyond the end knots.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

/// Built-in penalty families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyFamily {
    /// `sum_k coefficients[k] * y^k`
    Polynomial { coefficients: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

pub const PAYOFF_FAMILIES: &[&str] = &["quadratic", "gaussian_bump", "hat", "piecewise_linear"];
pub const PENALTY_FAMILIES: &[&str] = &["polynomial"];

impl PayoffFamily {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(m.to_string()));
        let finite = |vs: &[f64]| vs.iter().all(|v| v.is_finite());
        match self {
            PayoffFamily::Quadratic { a, b, c } => {
                if !finite(&[*a, *b, *c]) {
                    return bad("quadratic coefficients must be finite");
                }
                if *a > 0.0 {
                    return bad("quadratic payoff must be bounded above (a <= 0)");
                }
            }
            PayoffFamily::GaussianBump { amplitude, center, width, offset } => {
                if !finite(&[*amplitude, *center, *width, *offset]) || *width <= 0.0 {
                    return bad("gaussian_bump needs finite parameters and width > 0");
                }
            }
            PayoffFamily::Hat { height, center, half_width } => {
                if !finite(&[*height, *center, *half_width]) || *half_width <= 0.0 {
                    return bad("hat needs finite parameters and half_width > 0");
                }
            }
            PayoffFamily::PiecewiseLinear { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return bad("piecewise_linear needs equally many knots and values (at least one)");
                }
                if !finite(knots) || !finite(values) {
                    return bad("piecewise_linear knots and values must be finite");
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("piecewise_linear knots must be strictly increasing");
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RealFn> {
        self.validate()?;
        Ok(match self.clone() {
            PayoffFamily::Quadratic { a, b, c } => Arc::new(move |x| a * x * x + b * x + c),
            PayoffFamily::GaussianBump { amplitude, center, width, offset } => Arc::new(move |x| {
                let z = (x - center) / width;
                amplitude * (-z * z).exp() + offset
            }),
            PayoffFamily::Hat { height, center, half_width } => {
                Arc::new(move |x| height * (1.0 - (x - center).abs() / half_width).max(0.0))
            }
            PayoffFamily::PiecewiseLinear { knots, values } => {
                Arc::new(move |x| piecewise_linear(&knots, &values, x))
            }
        })
    }
}

fn piecewise_linear(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let n = knots.len();
    if x <= knots[0] {
        return values[0];
    }
    if x >= knots[n - 1] {
        return values[n - 1];
    }
    let k = knots.partition_point(|&t| t <= x) - 1;
    let s = (x - knots[k]) / (knots[k + 1] - knots[k]);
    values[k] + s * (values[k + 1] - values[k])
}

impl PenaltyFamily {
    pub fn build(&self) -> Result<RealFn> {
        match self.clone() {
            PenaltyFamily::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidProblem("polynomial coefficients must be finite".into()));
                }
                Ok(Arc::new(move |y| coefficients.iter().rev().fold(0.0, |acc, c| acc * y + c)))
            }
        }
    }
}

/// `sup_tau E[f(W_tau)] + g(E[tau])` together with the constants of the
/// quadratic growth envelope `|f(x) + beta x^2| <= gamma (1 + |x|)` and the
/// linear dominator `g(y) <= lambda y`.
#[derive(Clone)]
pub struct StoppingProblem {
    pub f: RealFn,
    pub g: RealFn,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl fmt::Debug for StoppingProblem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("StoppingProblem")
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

impl StoppingProblem {
    pub fn new(f: RealFn, g: RealFn, beta: f64, gamma: f64, lambda: f64) -> Result<Self> {
        if !(beta.is_finite() && gamma.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidProblem("beta, gamma, lambda must be finite".into()));
        }
        if beta < 0.0 || gamma < 0.0 {
            return Err(Error::InvalidProblem(format!(
                "beta ({beta}) and gamma ({gamma}) must be nonnegative"
            )));
        }
        Ok(Self { f, g, beta, gamma, lambda })
    }

    pub fn from_fns(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: f64,
        gamma: f64,
        lambda: f64,
    ) -> Result<Self> {
        Self::new(Arc::new(f), Arc::new(g), beta, gamma, lambda)
    }

    pub fn from_families(
        payoff: &PayoffFamily,
        penalty: &PenaltyFamily,
        beta: f64,
        gamma: f64,
        lambda: f64,
    ) -> Result<Self> {
        Self::new(payoff.build()?, penalty.build()?, beta, gamma, lambda)
    }

    #[inline]
    pub fn payoff(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn penalty(&self, y: f64) -> f64 {
        (self.g)(y)
    }

    /// Constant of the linear-growth bound `|w - f| <= C (1 + |x| + |y|)`.
    pub fn growth_constant(&self) -> f64 {
        1.0 + 2.0 * self.gamma + self.beta + self.gamma * self.gamma / 4.0
    }

    /// Upper bound on `w(x, y)` valid for every stopping time with `E[tau] = y`.
    pub fn value_upper_bound(&self, x: f64, y: f64) -> f64 {
        self.gamma * (1.0 + x.abs()) - self.beta * x * x + (1.0 - self.beta) * y
            + self.gamma * self.gamma / 4.0
    }

    pub fn coercivity_margin(&self) -> f64 {
        self.beta - self.gamma - self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationTolerances {
    /// Absolute slack on the envelope checks.
    pub envelope: f64,
    /// Relative slack on the concavity check of `g`.
    pub concavity: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        Self { envelope: 1e-12, concavity: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub location: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub growth_ok: bool,
    pub penalty_bound_ok: bool,
    pub g_concave_ok: bool,
    pub coercivity_ok: bool,
    pub coercivity_margin: f64,
    pub worst_violation: Option<Violation>,
    pub notes: String,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.growth_ok && self.penalty_bound_ok && self.g_concave_ok && self.coercivity_ok
    }
}

pub fn validate_problem(
    problem: &StoppingProblem,
    x_samples: &[f64],
    y_samples: &[f64],
) -> Result<ValidationReport> {
    validate_problem_with(problem, x_samples, y_samples, ValidationTolerances::default())
}

pub fn validate_problem_with(
    problem: &StoppingProblem,
    x_samples: &[f64],
    y_samples: &[f64],
    tol: ValidationTolerances,
) -> Result<ValidationReport> {
    if x_samples.is_empty() || y_samples.is_empty() {
        return Err(Error::InvalidProblem("validation samples must be nonempty".into()));
    }
    if let Some(&bad) = x_samples.iter().chain(y_samples).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "validation sample", location: bad });
    }

    let mut worst: Option<Violation> = None;
    let mut record = |check: &'static str, location: f64, excess: f64| {
        if excess > 0.0 && worst.as_ref().is_none_or(|w| excess > w.magnitude) {
            worst = Some(Violation { check, location, magnitude: excess });
        }
    };

    let mut growth_ok = true;
    for &x in x_samples {
        let fx = problem.payoff(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite { what: "payoff", location: x });
        }
        let excess = (fx + problem.beta * x * x).abs()
            - problem.gamma * (1.0 + x.abs())
            - tol.envelope;
        if excess > 0.0 {
            growth_ok = false;
            record("growth envelope", x, excess);
        }
    }

    let mut ys: Vec<(f64, f64)> = Vec::with_capacity(y_samples.len());
    for &y in y_samples {
        if y < 0.0 {
            continue;
        }
        let gy = problem.penalty(y);
        if !gy.is_finite() {
            return Err(Error::NonFinite { what: "penalty", location: y });
        }
        ys.push((y, gy));
    }
    ys.sort_by(|a, b| a.0.total_cmp(&b.0));
    ys.dedup_by(|a, b| a.0 == b.0);

    let mut penalty_bound_ok = true;
    for &(y, gy) in &ys {
        let excess = gy - problem.lambda * y - tol.envelope;
        if excess > 0.0 {
            penalty_bound_ok = false;
            record("penalty dominator", y, excess);
        }
    }

    // On sorted samples, concavity of every triple reduces to consecutive triples.
    let scale = 1.0 + ys.iter().fold(0.0f64, |m, &(_, g)| m.max(g.abs()));
    let mut g_concave_ok = true;
    for w in ys.windows(3) {
        let [(y1, g1), (y2, g2), (y3, g3)] = [w[0], w[1], w[2]];
        let chord = g1 + (g3 - g1) * (y2 - y1) / (y3 - y1);
        let excess = chord - g2 - tol.concavity * scale;
        if excess > 0.0 {
            g_concave_ok = false;
            record("penalty concavity", y2, excess);
        }
    }

    let margin = problem.coercivity_margin();
    let coercivity_ok = margin > 0.0;
    let mut notes = Vec::new();
    if !coercivity_ok {
        notes.push(format!(
            "beta - gamma - lambda = {margin} is not positive; a maximizing y may still exist, solving continues"
        ));
    }
    if !growth_ok {
        notes.push("payoff violates |f + beta x^2| <= gamma (1 + |x|) on the samples".to_string());
    }
    if !penalty_bound_ok {
        notes.push("penalty exceeds lambda * y on the samples".to_string());
    }
    if !g_concave_ok {
        notes.push("penalty is not concave on the samples".to_string());
    }

    Ok(ValidationReport {
        growth_ok,
        penalty_bound_ok,
        g_concave_ok,
        coercivity_ok,
        coercivity_margin: margin,
        worst_violation: worst,
        notes: notes.join("; "),
    })
}

/// Uniform samples on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
