use dynkin_core::corpus::example;
use dynkin_core::model::{uniform_grid, DiffusionSpec};
use dynkin_core::sets::PointSet;
use dynkin_core::sim::{
    approx_local_time, default_horizon, deviation_family, estimate_deviation_gain, run_game, simulate_paths,
    trace_path, SimParams,
};
use dynkin_core::strategy::{build_nash_strategies, Player, RandomizedStrategy, RateFn};

fn wiener() -> DiffusionSpec {
    DiffusionSpec::wiener(0.0, uniform_grid(-10.0, 10.0, 2001)).unwrap()
}

#[test]
fn wiener_endpoint_has_unit_variance() {
    let n = 100_000;
    let batch = simulate_paths(&wiener(), 0.0, SimParams::new(1e-3, 1.0, n, 7)).unwrap();
    let xs = batch.sample_at(1.0);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn band_local_time_matches_half_normal_mean() {
    // E L_1^0 = E|W_1| = sqrt(2/pi)
    let d = wiener();
    let mut p = SimParams::new(1e-4, 1.0, 20_000, 11);
    p.band_halfwidth = Some(0.01);
    let batch = simulate_paths(&d, 0.0, p).unwrap();
    let total: f64 = (0..p.n_paths)
        .map(|i| approx_local_time(&batch.path(i), 0.0, &d, &p).iter().sum::<f64>())
        .sum();
    let mean = total / p.n_paths as f64;
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean - exact).abs() < 0.1 * exact, "local time {mean} vs {exact}");
}

#[test]
fn overlapping_rates_rarely_fire_together() {
    let ex = example("ex_4_4").unwrap();
    let p = &ex.problem;
    let rate = |player| RandomizedStrategy {
        rate: RateFn::Constants(vec![(-1.0, 1.0, 1.0)]),
        ..RandomizedStrategy::never(player)
    };
    let (s1, s2) = (rate(Player::One), rate(Player::Two));
    let params = SimParams::new(1e-4, default_horizon(&p.payoffs, &p.diffusion), 5000, 3);
    let rep = run_game(&p.diffusion, &p.payoffs, (&s1, &s2), 0.0, &params).unwrap();
    let c = rep.counts;
    let stopped = c.p1_first + c.p2_first + c.simultaneous;
    assert!(stopped > 1000);
    assert!((c.simultaneous as f64) < 0.01 * params.n_paths as f64, "{c:?}");
}

#[test]
fn realized_payoffs_stay_within_payoff_bounds() {
    let ex = example("ex_4_4").unwrap();
    let p = &ex.problem;
    let s = p.solve().unwrap();
    let (s1, s2) = build_nash_strategies(&s.sol, &s.partition, &p.payoffs, &p.diffusion).unwrap();
    let bound = p.payoffs.max_abs(&p.diffusion.grid);
    let params = SimParams::new(1e-3, default_horizon(&p.payoffs, &p.diffusion), 300, 5);
    for i in 0..params.n_paths {
        let t = trace_path(&p.diffusion, &p.payoffs, (&s1, &s2), ex.x0, &params, i).unwrap();
        assert!(t.outcome.payoff.abs() <= bound + 1e-12, "path {i}: {:?}", t.outcome);
        for w in t.steps.windows(2) {
            assert!(w[1].psi1 >= w[0].psi1 && w[1].psi2 >= w[0].psi2);
        }
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let ex = example("ex_4_3").unwrap();
    let p = &ex.problem;
    let s = p.solve().unwrap();
    let (s1, s2) = build_nash_strategies(&s.sol, &s.partition, &p.payoffs, &p.diffusion).unwrap();
    let params = SimParams::new(1e-3, 20.0, 4000, 99);
    let a = run_game(&p.diffusion, &p.payoffs, (&s1, &s2), ex.x0, &params).unwrap();
    let b = run_game(&p.diffusion, &p.payoffs, (&s1, &s2), ex.x0, &params).unwrap();
    assert_eq!(a.to_json().to_string(), b.to_json().to_string());
}

#[test]
fn immediate_stopping_pays_the_right_payoff() {
    let ex = example("ex_4_2").unwrap();
    let p = &ex.problem;
    let params = SimParams::new(1e-3, 1.0, 100, 1);
    let (f, g, h) = p.payoffs.eval(0.5);
    let always = |pl| RandomizedStrategy::always(pl);
    let never = |pl| RandomizedStrategy::never(pl);
    let run = |a: &RandomizedStrategy, b: &RandomizedStrategy| {
        run_game(&p.diffusion, &p.payoffs, (a, b), 0.5, &params).unwrap().estimate
    };
    assert_eq!(run(&always(Player::One), &never(Player::Two)), f);
    assert_eq!(run(&never(Player::One), &always(Player::Two)), g);
    assert_eq!(run(&always(Player::One), &always(Player::Two)), h);
}

#[test]
fn replaying_the_equilibrium_gains_nothing() {
    let ex = example("ex_4_2").unwrap();
    let p = &ex.problem;
    let s = p.solve().unwrap();
    let (s1, s2) = build_nash_strategies(&s.sol, &s.partition, &p.payoffs, &p.diffusion).unwrap();
    let params = SimParams::new(1e-3, default_horizon(&p.payoffs, &p.diffusion), 2000, 17);
    let devs = vec![("self".to_string(), s1.clone())];
    let rep = estimate_deviation_gain(&p.diffusion, &p.payoffs, (&s1, &s2), &devs, Player::One, ex.x0, &params)
        .unwrap();
    assert_eq!(rep.gains[0].gain, 0.0);
    assert_eq!(rep.gains[0].std_error, 0.0);
}

#[test]
fn deviation_family_includes_the_extremes() {
    let s = RandomizedStrategy::pure(Player::Two, PointSet::new(vec![(1.0, 2.0)], vec![]));
    let fam = deviation_family(&s, 0.0);
    assert_eq!(fam.len(), 11);
    assert!(fam.iter().any(|(_, d)| d.stop_set == PointSet::everything()));
    assert!(fam.iter().any(|(_, d)| d.stop_set.is_empty()));
}
