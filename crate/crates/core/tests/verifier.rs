use dynkin_core::corpus::example;
use dynkin_core::strategy::{build_nash_strategies, Player, RandomizedStrategy};
use dynkin_core::verifier::{best_response_value, verify};

#[test]
fn responding_to_immediate_stopping_pays_the_pinned_payoff() {
    let ex = example("ex_4_2").unwrap();
    let p = &ex.problem;
    let s = p.solve().unwrap();
    let br = best_response_value(
        &RandomizedStrategy::always(Player::Two),
        &p.payoffs,
        &p.diffusion,
        Player::One,
        &s.sol,
    )
    .unwrap();
    for (x, w) in br.grid.iter().zip(&br.w) {
        let (_, g, h) = p.payoffs.eval(*x);
        assert!((w - g.max(h)).abs() < 1e-9, "x {x}: {w}");
    }
}

#[test]
fn responding_to_a_passive_opponent_is_optimal_stopping() {
    // sup E e^{-r tau} X_tau^2: A cosh(kx) inside (-b, b), smooth fit at b
    let ex = example("ex_5_1").unwrap();
    let p = &ex.problem;
    let s = p.solve().unwrap();
    let br = best_response_value(
        &RandomizedStrategy::never(Player::Two),
        &p.payoffs,
        &p.diffusion,
        Player::One,
        &s.sol,
    )
    .unwrap();
    let k = (2.0 * p.diffusion.r).sqrt();
    let (mut lo, mut hi) = (1.0, 7.0);
    for _ in 0..200 {
        let b = 0.5 * (lo + hi);
        if b * k * (k * b).tanh() < 2.0 {
            lo = b;
        } else {
            hi = b;
        }
    }
    let b = 0.5 * (lo + hi);
    let a = b * b / (k * b).cosh();
    let exact = |x: f64| if x.abs() < b { a * (k * x).cosh() } else { x * x };
    let err = br
        .grid
        .iter()
        .zip(&br.w)
        .map(|(&x, &w)| (w - exact(x)).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "sup error {err}, threshold {b}");
}

#[test]
fn nash_strategies_leave_no_gain() {
    for id in ["ex_4_2", "ex_4_3", "ex_4_4"] {
        let p = example(id).unwrap().problem;
        let s = p.solve().unwrap();
        let rep = verify(&s.sol, &s.partition, &p.payoffs, &p.diffusion, 1e-6).unwrap();
        assert_eq!(rep.best_responses.len(), 2, "{id}");
        for br in &rep.best_responses {
            assert!(br.max_gain() <= br.allowance + 1e-6, "{id} player {:?}: gain {}", br.player, br.max_gain());
        }
    }
}

#[test]
fn a_weaker_clock_is_exploited() {
    let p = example("ex_4_3").unwrap().problem;
    let s = p.solve().unwrap();
    let (_, s2) = build_nash_strategies(&s.sol, &s.partition, &p.payoffs, &p.diffusion).unwrap();
    let br = best_response_value(&s2.scaled(0.0), &p.payoffs, &p.diffusion, Player::One, &s.sol).unwrap();
    assert!(br.max_gain() > 10.0 * br.allowance.max(1e-6));
}
