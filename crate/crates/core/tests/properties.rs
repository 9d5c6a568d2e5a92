use mft::dynamics::Trajectory;
use mft::measure::{wasserstein1_assignment, wasserstein1_sorted, DEFAULT_ASSIGNMENT_CAP};
use mft::objective::{measure_integrand, sum_of_squares_integrand};
use mft::ocp::finite_difference_gradient;
use mft::report::to_json;
use mft::scenario::{sampled_kernel_growth, InitialSpec, Sampler, TurnpikeParams};
use mft::{
    analyze, compute_static_pair, dissipativity_deficit, drift, estimate_constants,
    feedback_control, gradient, integrate, interior_metric, invariant_radius, objective,
    scenario, simulate_feedback, solve, wasserstein1, ControlCost, ControlGrid,
    EffectiveConstants, EmpiricalMeasure, Kernel, ParticleState, Scenario, SolverConfig,
    StateCost, TurnpikeReport,
};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        Just(Kernel::Zero),
        (-2.0..2.0f64).prop_map(|kappa| Kernel::Linear { kappa }),
        (-2.0..2.0f64).prop_map(|c| Kernel::BoundedInfluence { c }),
    ]
}

fn state_cost_strategy(dim: usize) -> impl Strategy<Value = StateCost> {
    let target = prop::collection::vec(-1.0..1.0f64, dim);
    prop_oneof![
        (target.clone(), 0.1..3.0f64).prop_map(|(target, weight)| StateCost::Quadratic { target, weight }),
        (target, 0.1..3.0f64, 0.2..2.0f64)
            .prop_map(|(target, weight, delta)| StateCost::PseudoHuber { target, weight, delta }),
    ]
}

fn points(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, dim), n)
}

#[allow(clippy::too_many_arguments)]
fn build(
    dim: usize,
    initial: Vec<Vec<f64>>,
    kernel: Kernel,
    state_cost: StateCost,
    gamma: f64,
    beta: f64,
    b: f64,
    steps: usize,
) -> Scenario {
    Scenario {
        dim,
        particles: initial.len(),
        a: 0.0,
        b,
        steps,
        substeps: 1,
        kernel,
        state_cost,
        control_cost: ControlCost { gamma, q: 2.0 },
        beta,
        initial: InitialSpec::Explicit(initial),
        initial_states: vec![],
        turnpike: TurnpikeParams::default(),
    }
    .validated()
    .unwrap()
}

/// Random small scenario in d = 2.
fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (1usize..6)
        .prop_flat_map(|n| {
            (
                points(n, 2),
                kernel_strategy(),
                state_cost_strategy(2),
                0.1..3.0f64,
                0.3..2.0f64,
            )
        })
        .prop_map(|(init, kernel, cost, gamma, beta)| build(2, init, kernel, cost, gamma, beta, 1.0, 10))
}

fn permute(x: &[f64], perm: &[usize], dim: usize) -> Vec<f64> {
    perm.iter().flat_map(|&k| x[k * dim..(k + 1) * dim].to_vec()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn measure(dim: usize, n: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-3.0..3.0f64, n * dim).prop_map(move |a| EmpiricalMeasure::new(dim, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn c0_recomputes_bit_for_bit(s in scenario_strategy(), radius in 0.0..4.0f64) {
        let pair = compute_static_pair(&s).unwrap();
        let c = estimate_constants(&s, &pair, radius).unwrap();
        let again = EffectiveConstants::cheap_control_constant(c.C_L, c.C_Psi, c.C_P, s.beta);
        prop_assert_eq!(again.to_bits(), c.C0.to_bits());
    }

    #[test]
    fn sampled_kernel_growth_stays_below_closed_form(kernel in kernel_strategy(), dim in 1usize..4, radius in 0.01..10.0f64) {
        let sampled = sampled_kernel_growth(&kernel, dim, radius);
        prop_assert!(sampled <= kernel.growth_bound() + 1e-9);
    }

    #[test]
    fn static_state_is_a_fixed_point(s in scenario_strategy()) {
        let pair = compute_static_pair(&s).unwrap();
        let at_rest = s.with_initial(pair.psi_sigma.repeat(s.particles)).unwrap();
        let traj = integrate(&at_rest.initial_state(), &ControlGrid::zeros(&at_rest), &at_rest).unwrap();
        prop_assert!(max_abs_diff(traj.state(1), &at_rest.initial_states) <= 1e-15);
    }

    #[test]
    fn permuting_particles_permutes_everything(s in scenario_strategy(), seed in any::<u64>()) {
        let n = s.particles;
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let pair = compute_static_pair(&s).unwrap();
        let sp = s.with_initial(permute(&s.initial_states, &perm, s.dim)).unwrap();
        let tol = 1e-12;

        let d = drift(&s.initial_state(), &s).unwrap();
        let dp = drift(&sp.initial_state(), &sp).unwrap();
        prop_assert!(max_abs_diff(&permute(&d, &perm, s.dim), &dp) <= tol);

        let f = feedback_control(&s.initial_state(), &pair, &s).unwrap();
        let fp = feedback_control(&sp.initial_state(), &pair, &sp).unwrap();
        prop_assert!(max_abs_diff(&permute(&f, &perm, s.dim), &fp) <= tol);

        let (t, _) = simulate_feedback(&s.initial_state(), &pair, &s).unwrap();
        let (tp, _) = simulate_feedback(&sp.initial_state(), &pair, &sp).unwrap();
        for m in 0..=s.steps {
            prop_assert!(max_abs_diff(&permute(t.state(m), &perm, s.dim), tp.state(m)) <= tol);
        }
    }

    #[test]
    fn linear_kernel_commutes_with_translation(
        init in points(4, 2),
        kappa in -1.5..1.5f64,
        shift in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let cost = StateCost::Quadratic { target: vec![0.2, -0.4], weight: 1.0 };
        let s = build(2, init.clone(), Kernel::Linear { kappa }, cost, 1.0, 1.0, 1.0, 10);
        let moved: Vec<Vec<f64>> = init.iter().map(|p| vec![p[0] + shift[0], p[1] + shift[1]]).collect();
        let target = vec![0.2 + shift[0], -0.4 + shift[1]];
        let st = build(2, moved, Kernel::Linear { kappa }, StateCost::Quadratic { target, weight: 1.0 }, 1.0, 1.0, 1.0, 10);

        let a = simulate_feedback(&s.initial_state(), &compute_static_pair(&s).unwrap(), &s).unwrap().0;
        let b = simulate_feedback(&st.initial_state(), &compute_static_pair(&st).unwrap(), &st).unwrap().0;
        let open_a = integrate(&s.initial_state(), &ControlGrid::constant(&s, &[0.3, -0.1]), &s).unwrap();
        let open_b = integrate(&st.initial_state(), &ControlGrid::constant(&st, &[0.3, -0.1]), &st).unwrap();
        for m in 0..=s.steps {
            let shifted: Vec<f64> = a.state(m).chunks(2).flat_map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
            prop_assert!(max_abs_diff(&shifted, b.state(m)) <= 1e-12);
            let shifted: Vec<f64> = open_a.state(m).chunks(2).flat_map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
            prop_assert!(max_abs_diff(&shifted, open_b.state(m)) <= 1e-12);
        }
    }

    #[test]
    fn feedback_stays_in_invariant_ball(s in scenario_strategy()) {
        let pair = compute_static_pair(&s).unwrap();
        let r = invariant_radius(&s, &pair);
        let (traj, _) = simulate_feedback(&s.initial_state(), &pair, &s).unwrap();
        for m in 0..=s.steps {
            for p in traj.state(m).chunks(s.dim) {
                let d = p.iter().zip(&pair.psi_sigma).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d <= r * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn objective_and_curves_are_nonnegative_and_monotone(s in scenario_strategy(), u in prop::collection::vec(-1.0..1.0f64, 10 * 5 * 2)) {
        let grid = ControlGrid::from_values(&s, u[..s.steps * s.particles * s.dim].to_vec()).unwrap();
        let traj = integrate(&s.initial_state(), &grid, &s).unwrap();
        let cost = objective(&traj, &grid, &s).unwrap();
        prop_assert!(cost.total >= 0.0);
        prop_assert!(cost.samples.iter().all(|v| *v >= 0.0));
        let pair = compute_static_pair(&s).unwrap();
        let curve = dissipativity_deficit(&traj, &grid, &pair, &s).unwrap();
        for w in curve.lhs.windows(2).chain(curve.rhs.windows(2)).chain(curve.rhs_sos.windows(2)) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn measure_integrand_equals_microscopic_sum(s in scenario_strategy(), u in prop::collection::vec(-1.0..1.0f64, 10 * 5 * 2)) {
        let grid = ControlGrid::from_values(&s, u[..s.steps * s.particles * s.dim].to_vec()).unwrap();
        let traj = integrate(&s.initial_state(), &grid, &s).unwrap();
        let pair = compute_static_pair(&s).unwrap();
        let a = measure_integrand(&traj, &pair);
        let b = sum_of_squares_integrand(&traj, &pair);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn interior_metric_is_nonincreasing_in_t_lo(s in scenario_strategy(), u in prop::collection::vec(-1.0..1.0f64, 10 * 5 * 2)) {
        let grid = ControlGrid::from_values(&s, u[..s.steps * s.particles * s.dim].to_vec()).unwrap();
        let traj = integrate(&s.initial_state(), &grid, &s).unwrap();
        let pair = compute_static_pair(&s).unwrap();
        let values: Vec<f64> = traj.times.iter().map(|t| interior_metric(&traj, &pair, *t).unwrap()).collect();
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(*values.last().unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_gradient_matches_finite_differences(s in scenario_strategy(), u in prop::collection::vec(-1.0..1.0f64, 10 * 5 * 2)) {
        let grid = ControlGrid::from_values(&s, u[..s.steps * s.particles * s.dim].to_vec()).unwrap();
        let g = gradient(&grid, &s).unwrap();
        let fd = finite_difference_gradient(&grid, &s, 1e-5).unwrap();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(scale > 1e-8);
        prop_assert!(max_abs_diff(&g, &fd) / scale <= 1e-5);
    }

    #[test]
    fn solver_descends_and_respects_cheap_control(s in scenario_strategy()) {
        let cfg = SolverConfig { max_iter: 200, ..SolverConfig::default() };
        let sol = solve(&s, &cfg).unwrap();
        for w in sol.log.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective);
        }
        let pair = compute_static_pair(&s).unwrap();
        let c = estimate_constants(&s, &pair, invariant_radius(&s, &pair)).unwrap();
        let mean = s.initial_states.chunks(s.dim)
            .map(|p| p.iter().zip(&pair.psi_sigma).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>() / s.particles as f64;
        prop_assert!(sol.value <= c.C0 * mean);
        prop_assert!(sol.value <= sol.initial_value);
    }

    #[test]
    fn integral_turnpike_holds_when_gated(seed in 0u64..1000, b in 2.0..12.0f64) {
        let mut s = scenario::consensus();
        s.initial = InitialSpec::Sampled {
            sampler: Sampler::UniformBall { center: vec![2.0, 1.0], radius: 0.75 },
            seed,
        };
        let s = s.validated().unwrap().with_horizon(b).unwrap();
        let (report, _) = analyze(&s, &SolverConfig::default()).unwrap();
        if report.gate {
            prop_assert!(report.integral.margin >= 0.0);
            prop_assert!(report.a_star.margin >= 0.0);
            prop_assert!(report.odethm1.margin >= 0.0);
        }
        // same numbers, two notations
        prop_assert!(report.measure_a_star.lhs <= report.a_star.lhs + 1e-12);
    }

    #[test]
    fn feedback_certificate_is_uniform_in_horizon(seed in 0u64..1000, b in 1.0..40.0f64) {
        let mut s = scenario::consensus();
        s.initial = InitialSpec::Sampled {
            sampler: Sampler::UniformBall { center: vec![2.0, 1.0], radius: 0.75 },
            seed,
        };
        let s = s.validated().unwrap().with_horizon(b).unwrap();
        let pair = compute_static_pair(&s).unwrap();
        let c = estimate_constants(&s, &pair, invariant_radius(&s, &pair)).unwrap();
        let (traj, _) = simulate_feedback(&s.initial_state(), &pair, &s).unwrap();
        let integral = s.particles as f64 * interior_metric(&traj, &pair, s.a).unwrap();
        let sum: f64 = s.initial_states.chunks(s.dim)
            .map(|p| p.iter().zip(&pair.psi_sigma).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .sum();
        prop_assert!(integral <= c.C0 * sum);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn w1_metric_axioms(
        (dim, mu, nu, rho) in (1usize..4, 1usize..9).prop_flat_map(|(d, n)| (Just(d), measure(d, n), measure(d, n), measure(d, n)))
    ) {
        let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein1(a, b).unwrap();
        prop_assert!(w(&mu, &mu).abs() <= 1e-10);
        prop_assert!((w(&mu, &nu) - w(&nu, &mu)).abs() <= 1e-10);
        prop_assert!(w(&mu, &rho) <= w(&mu, &nu) + w(&nu, &rho) + 1e-10);
        prop_assert!(w(&mu, &nu) >= 0.0);
        let _ = dim;
    }

    #[test]
    fn w1_unequal_counts_satisfy_triangle(mu in measure(2, 3), nu in measure(2, 4), rho in measure(2, 6)) {
        let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein1(a, b).unwrap();
        prop_assert!(w(&mu, &rho) <= w(&mu, &nu) + w(&nu, &rho) + 1e-10);
    }

    #[test]
    fn sorted_matches_assignment_in_1d(mu in measure(1, 7), nu in measure(1, 7)) {
        let a = wasserstein1_sorted(&mu, &nu).unwrap();
        let b = wasserstein1_assignment(&mu, &nu, DEFAULT_ASSIGNMENT_CAP).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn w1_translation(mu in measure(2, 5), nu in measure(2, 5), v in prop::collection::vec(-2.0..2.0f64, 2)) {
        let base = wasserstein1(&mu, &nu).unwrap();
        let both = wasserstein1(&mu.translated(&v), &nu.translated(&v)).unwrap();
        prop_assert!((base - both).abs() <= 1e-10);
        let one = wasserstein1(&mu.translated(&v), &nu).unwrap();
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        prop_assert!((one - base).abs() <= norm + 1e-10);
    }
}

#[test]
fn quadrature_error_is_second_order() {
    // smooth fixed control, M -> 2M -> 4M
    let s = build(1, vec![vec![1.0], vec![-0.5]], Kernel::BoundedInfluence { c: 0.7 }, StateCost::Quadratic { target: vec![0.0], weight: 1.0 }, 1.0, 1.0, 2.0, 20);
    let value = |steps: usize| {
        let mut t = s.clone();
        t.steps = steps;
        let t = t.validated().unwrap();
        let dt = t.dt();
        let values: Vec<f64> = (0..steps)
            .flat_map(|m| {
                let tm = t.a + (m as f64 + 0.5) * dt;
                [tm.sin(), -(tm.cos())]
            })
            .collect();
        let u = ControlGrid::from_values(&t, values).unwrap();
        objective(&integrate(&t.initial_state(), &u, &t).unwrap(), &u, &t).unwrap().total
    };
    let (j1, j2, j4, j8) = (value(20), value(40), value(80), value(160));
    let r1 = (j1 - j2).abs() / (j2 - j4).abs();
    let r2 = (j2 - j4).abs() / (j4 - j8).abs();
    assert!(r1 > 3.0 && r2 > 3.0, "ratios {r1} {r2}");
}

#[test]
fn turnpike_report_round_trips_through_json() {
    let (report, _) = analyze(&scenario::consensus(), &SolverConfig::default()).unwrap();
    let text = to_json(&report).unwrap();
    let back: TurnpikeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(to_json(&back).unwrap(), text);
}

#[test]
fn trajectory_fixture_for_uniform_state() {
    // all particles at one point: every W1 between nested systems is zero
    let mut s = scenario::consensus();
    s.initial = InitialSpec::Sampled {
        sampler: Sampler::Point { center: vec![1.0, 1.0] },
        seed: 0,
    };
    s.b = 2.0;
    s.steps = 40;
    let s = s.validated().unwrap();
    let report = mft::convergence_study(&s, &[2, 4, 8], mft::Policy::Feedback, &[0, 1], &SolverConfig::default()).unwrap();
    assert!(report.rows.iter().all(|r| r.sup_w1 == 0.0));
    let t: &Trajectory = &simulate_feedback(&s.initial_state(), &compute_static_pair(&s).unwrap(), &s).unwrap().0;
    assert_eq!(t.particles, 16);
    let p = ParticleState::new(0.0, 2, vec![0.0; 4]).unwrap();
    assert_eq!(p.particles(), 2);
}
