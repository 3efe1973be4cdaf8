use proptest::prelude::*;
use tistop::hjb::{central_derivatives, heat_closure, NearBoundary, Stencil, Sweeper};
use tistop::oracle::{heat_value, tree_dual};
use tistop::outer::TOL_CONC;
use tistop::policy::{certify, simulate};
use tistop::problem::{linspace, PayoffFamily, PenaltyFamily};
use tistop::*;

fn small_grid() -> Grid2D {
    Grid2D::new(-1.0, 1.0, 1.0, 5, 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bilinear_is_monotone_in_corner_values(
        values in proptest::collection::vec(-5.0f64..5.0, 20),
        node in 0usize..20,
        raise in 0.0f64..3.0,
        x in -1.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let g = small_grid();
        let a = ValueSurface::new(g, values.clone()).unwrap();
        let mut raised = values;
        raised[node] += raise;
        let b = ValueSurface::new(g, raised).unwrap();
        prop_assert!(a.sample(x, y).unwrap() <= b.sample(x, y).unwrap() + 1e-12);
    }

    #[test]
    fn bilinear_reproduces_every_node(values in proptest::collection::vec(-5.0f64..5.0, 20)) {
        let g = small_grid();
        let s = ValueSurface::new(g, values).unwrap();
        for i in 0..g.n_x {
            for j in 0..g.n_y {
                let (x, y) = g.node(i, j);
                prop_assert_eq!(s.sample(x, y).unwrap().to_bits(), s.at(i, j).to_bits());
            }
        }
    }

    #[test]
    fn validation_is_deterministic_and_growth_bounds_payoff(
        a in -2.0f64..0.0,
        b in -1.0f64..1.0,
        c in -1.0f64..1.0,
        beta in 0.0f64..2.0,
        gamma in 0.0f64..2.0,
    ) {
        let payoff = PayoffFamily::Quadratic { a, b, c };
        let penalty = PenaltyFamily::Polynomial { coefficients: vec![0.0, -1.0] };
        let p = StoppingProblem::from_families(&payoff, &penalty, beta, gamma, -1.0).unwrap();
        let xs = linspace(-5.0, 5.0, 101);
        let ys = linspace(0.0, 2.0, 21);
        let r1 = validate_problem(&p, &xs, &ys).unwrap();
        let r2 = validate_problem(&p, &xs, &ys).unwrap();
        prop_assert_eq!(&r1, &r2);
        if r1.growth_ok {
            for &x in &xs {
                prop_assert!(p.payoff(x) <= gamma * (1.0 + x.abs()) - beta * x * x + 1e-12);
            }
        }
    }

    #[test]
    fn sweeps_keep_the_bottom_row(
        interior in proptest::collection::vec(-2.0f64..2.0, 9 * 7),
        sweeps in 1usize..6,
        gauss_seidel in any::<bool>(),
    ) {
        let p = StoppingProblem::from_fns(|x| (-x * x).exp(), |y| -y, 0.0, 1.0, -1.0).unwrap();
        let g = Grid2D::new(-1.0, 1.0, 0.6, 9, 7).unwrap();
        let init = heat_closure(&p, g, 32).unwrap();
        let mut s = init.clone();
        for i in 1..g.n_x - 1 {
            for j in 1..g.n_y - 1 {
                s.set(i, j, interior[g.index(i, j)]);
            }
        }
        let mode = if gauss_seidel { SweepMode::GaussSeidel } else { SweepMode::Jacobi };
        let cfg = SolverConfig { k_max: 3, sweep_mode: mode, ..Default::default() };
        let sweeper = Sweeper::new(Stencil::for_problem(&p, g, &cfg).unwrap(), &cfg);
        for _ in 0..sweeps {
            sweeper.sweep(&mut s);
        }
        for i in 0..g.n_x {
            prop_assert_eq!(s.at(i, 0).to_bits(), p.payoff(g.x(i)).to_bits());
        }
    }
}

#[test]
fn clip_and_boundary_arms_agree_on_quadratics() {
    let p = StoppingProblem::from_fns(|x| -x * x + 0.5 * x, |y| -y, 1.0, 1.0, -1.0).unwrap();
    let g = Grid2D::new(-3.0, 3.0, 1.0, 61, 21).unwrap();
    for near in [NearBoundary::Clip, NearBoundary::BoundaryArms] {
        let r = solve(&p, g, &SolverConfig { near_boundary: near, ..Default::default() }).unwrap();
        assert!(r.converged);
        for (k, (&w, (x, y))) in
            r.surface.values.iter().zip((0..g.n_x).flat_map(|i| (0..g.n_y).map(move |j| g.node(i, j)))).enumerate()
        {
            assert!((w - (p.payoff(x) - y)).abs() < 1e-9, "{near:?} node {k}");
        }
    }
}

fn bump_problem() -> StoppingProblem {
    StoppingProblem::from_fns(|x| (-x * x).exp(), |y| -0.5 * y - 0.25 * y * y, 0.0, 1.0, -0.5).unwrap()
}

fn bump_solve() -> SolveResult {
    let g = Grid2D::new(-4.0, 4.0, 1.0, 81, 41).unwrap();
    let cfg = SolverConfig { sweep_mode: SweepMode::GaussSeidel, ..Default::default() };
    solve(&bump_problem(), g, &cfg).unwrap()
}

#[test]
fn converged_bump_surface_properties() {
    let r = bump_solve();
    let p = bump_problem();
    assert!(r.converged);
    let s = &r.surface;
    let g = s.grid;
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            let (x, y) = g.node(i, j);
            let w = s.at(i, j);
            let d2 = s.at(i, j + 1) - 2.0 * s.at(i, j) + s.at(i, j - 1);
            assert!(d2 <= TOL_CONC * (1.0 + w.abs()), "concavity at ({x}, {y})");
            assert!(w >= heat_value(|z| p.payoff(z), x, y, 32).unwrap() - 1e-9);
            assert!(w <= 1.0 + 1e-9, "value above sup f at ({x}, {y})");
        }
    }
    assert_eq!(r.bound_violations.upper_violations + r.bound_violations.lower_violations, 0);
}

#[test]
fn quadratic_surface_is_degenerate_elliptic() {
    let p = StoppingProblem::from_fns(|x| -x * x + x, |y| -y, 1.0, 1.0, 0.0).unwrap();
    let g = Grid2D::new(-4.0, 4.0, 1.0, 81, 41).unwrap();
    let r = solve(&p, g, &SolverConfig::default()).unwrap();
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_y - 1 {
            assert!(central_derivatives(&r.surface, i, j).u_yy <= TOL_CONC);
        }
    }
}

#[test]
fn outer_result_beats_every_grid_candidate() {
    let r = bump_solve();
    let p = bump_problem();
    let g = r.surface.grid;
    let opts = OuterOptions { tol_y: g.h_y() / 4.0, tol_conc: TOL_CONC };
    let xs = [-1.0, 0.0, 0.3, 2.0];
    for res in value_function(&p, &r.surface, &xs, None, opts) {
        let o = res.unwrap();
        for j in 0..g.n_y {
            let y = g.y(j);
            let cand = r.surface.sample(o.x, y).unwrap() + p.penalty(y);
            assert!(o.v >= cand - 1e-9, "x {} y {y}: {} < {cand}", o.x, o.v);
        }
    }
}

#[test]
fn coercive_objective_stays_under_its_linear_bound() {
    // gamma = 0, where the linear dominator holds for small y as well.
    let p = StoppingProblem::from_fns(|x| -x * x, |y| 0.5 * y, 1.0, 0.0, 0.5).unwrap();
    assert!(p.coercivity_margin() > 0.0);
    let g = Grid2D::new(-3.0, 3.0, 1.0, 61, 21).unwrap();
    let r = solve(&p, g, &SolverConfig::default()).unwrap();
    for i in 0..g.n_x {
        for j in 0..g.n_y {
            let (x, y) = g.node(i, j);
            let obj = r.surface.at(i, j) + p.penalty(y);
            assert!(obj <= p.gamma * (1.0 + x.abs()) - p.beta * x * x + (p.lambda + p.gamma - p.beta) * y + 1e-9);
        }
    }
}

#[test]
fn simulated_time_matches_budget_for_several_controls_and_seeds() {
    let p = bump_problem();
    let g = Grid2D::new(-6.0, 6.0, 3.0, 61, 31).unwrap();
    let varying = ControlField {
        grid: g,
        alpha: (0..g.len()).map(|k| (g.x(k / g.n_y)).sin()).collect(),
        alpha_max: 1.0,
    };
    for control in [ControlField::constant(g, 0.0), ControlField::constant(g, 0.7), varying] {
        for seed in [1u64, 2, 3] {
            let cfg = SimConfig { n_paths: 4000, dt: 1e-3, seed, ..Default::default() };
            let sim = simulate(&p, &control, 0.2, 0.4, &cfg).unwrap();
            assert_eq!(sim.capped_fraction, 0.0);
            assert!((sim.est_tau - 0.4).abs() <= 3.0 * sim.se_tau + 1e-12, "seed {seed}: {sim:?}");
        }
    }
}

#[test]
fn simulated_policy_does_not_beat_reported_value() {
    let r = bump_solve();
    let p = bump_problem();
    let g = r.surface.grid;
    let opts = OuterOptions { tol_y: g.h_y() / 4.0, tol_conc: TOL_CONC };
    let outer = value_function(&p, &r.surface, &[0.5], None, opts).remove(0).unwrap();
    let control = tistop::policy::policy_control(&r, Default::default());
    let cfg = SimConfig { n_paths: 20_000, dt: 1e-3, seed: 11, ..Default::default() };
    let sim = simulate(&p, &control, 0.5, outer.y_star, &cfg).unwrap();
    let cert = certify(&p, &outer, &sim, 0.03);
    assert!(cert.mc_value <= outer.v + 3.0 * cert.combined_se + 0.01, "{cert:?}");
}

#[test]
fn heat_value_sits_below_tree_dual() {
    let f = |x: f64| (-x * x).exp();
    for y in [0.1, 0.3, 0.6] {
        let depth = 256;
        let tree = tree_dual(f, 0.3, y, depth, 2.0 * y / depth as f64, (-1.0, 1.0), 1e-9).unwrap();
        assert!(heat_value(f, 0.3, y, 32).unwrap() <= tree.value + 0.05);
    }
}
