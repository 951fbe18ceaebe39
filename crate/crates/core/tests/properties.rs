use proptest::prelude::*;

use dynkin_core::associated::build_associated_payoffs;
use dynkin_core::calibration::{
    calibrate_isolated_point, survival_probability, CalibrationCase, CalibrationOptions, Envelope, Support,
};
use dynkin_core::corpus::example;
use dynkin_core::expr::Expr;
use dynkin_core::model::{classify_regions, classify_values, uniform_grid, DiffusionSpec, PayoffTriple, PiecewiseFn};
use dynkin_core::sets::PointSet;
use dynkin_core::strategy::Player;

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![(-3i32..=3).prop_map(f64::from), -3.0..3.0f64]
}

fn quadratic(c: [f64; 3]) -> PiecewiseFn {
    PiecewiseFn::smooth(Expr::c(c[0]) + Expr::c(c[1]) * Expr::x() + Expr::c(c[2]) * Expr::x().powi(2))
}

fn wiener(lo: f64, hi: f64, n: usize) -> DiffusionSpec {
    DiffusionSpec::wiener(0.0, uniform_grid(lo, hi, n)).unwrap()
}

proptest! {
    #[test]
    fn exactly_one_region_per_point(f in value(), g in value(), h in value(), tol in prop_oneof![Just(0.0), 0.0..0.5f64]) {
        prop_assert!(classify_values(0.0, f, g, h, Some(tol)).is_ok());
        prop_assert!(classify_values(0.0, f, g, h, None).is_ok());
    }

    #[test]
    fn associated_payoffs_are_ordered(
        cf in prop::array::uniform3(-2.0..2.0f64),
        cg in prop::array::uniform3(-2.0..2.0f64),
        ch in prop::array::uniform3(-2.0..2.0f64),
    ) {
        let payoffs = PayoffTriple::new(quadratic(cf), quadratic(cg), quadratic(ch));
        let grid = uniform_grid(-2.0, 2.0, 81);
        let partition = classify_regions(&payoffs, &grid, None).unwrap();
        let a = build_associated_payoffs(&payoffs, &partition).unwrap();
        for (ft, gt) in a.f_tilde.iter().zip(&a.g_tilde) {
            prop_assert!(ft <= gt);
        }
    }

    #[test]
    fn mask_sets_cover_their_nodes(mask in prop::collection::vec(any::<bool>(), 2..60)) {
        let grid = uniform_grid(0.0, 1.0, mask.len());
        let set = PointSet::from_mask(&grid, &mask, |_, _| None);
        for (x, m) in grid.iter().zip(&mask) {
            prop_assert_eq!(set.contains(*x), *m);
        }
        prop_assert_eq!(set.is_empty(), !mask.iter().any(|&b| b));
    }

    #[test]
    fn first_hit_lies_in_the_set(
        a in -5.0..5.0f64, len in 0.0..2.0f64, lo in -6.0..6.0f64, span in 0.0..6.0f64,
    ) {
        let set = PointSet::new(vec![(a, a + len)], vec![]);
        if let Some(y) = set.first_hit(lo, lo + span) {
            prop_assert!(set.contains(y));
            prop_assert!(y >= lo && y <= lo + span);
        }
    }

    #[test]
    fn survival_falls_as_the_clock_speeds_up(c in 0.01..50.0f64, w in 0.2..2.0f64) {
        let d = wiener(-4.0, 4.0, 81);
        let s = |c| survival_probability(&d, 0.0, (-w, w), f64::INFINITY, Support::Interval(-w, w), c);
        prop_assert!(s(2.0 * c) <= s(c) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&s(c)));
    }
}

#[test]
fn point_clock_survival_matches_exit_local_time() {
    // L at the exit of (-w, w) from 0 is exponential with mean w
    let d = wiener(-4.0, 4.0, 81);
    for (w, gamma) in [(0.5, 1.0), (1.0, 3.0), (2.0, 0.25)] {
        let p = survival_probability(&d, 0.0, (-w, w), f64::INFINITY, Support::Point(0.0), gamma);
        let exact = 1.0 / (1.0 + gamma * w);
        assert!((p - exact).abs() < 2e-3, "w {w}, gamma {gamma}: {p} vs {exact}");
    }
}

#[test]
fn interval_clock_survival_matches_cosh() {
    // P(e/c > tau) = 1 / cosh(w sqrt(2c)) from the centre
    let d = wiener(-4.0, 4.0, 81);
    let (w, c) = (1.0, 2.0);
    let p = survival_probability(&d, 0.0, (-w, w), f64::INFINITY, Support::Interval(-w, w), c);
    let exact = 1.0 / (w * (2.0 * c as f64).sqrt()).cosh();
    assert!((p - exact).abs() < 2e-3, "{p} vs {exact}");
}

#[test]
fn tighter_epsilon_needs_a_larger_coefficient() {
    let ex = example("ex_5_1").unwrap();
    let p = &ex.problem;
    let d = p.diffusion.with_grid(uniform_grid(-8.0, 8.0, 1601)).unwrap();
    let opts = CalibrationOptions::default();
    let env = Envelope::estimate(&p.payoffs, &d, &opts);
    let coef = |eps| {
        calibrate_isolated_point(
            &p.payoffs,
            &d,
            &env,
            Player::One,
            1.0,
            CalibrationCase::OwnOnly,
            &PointSet::empty(),
            eps,
            &opts,
        )
        .unwrap()
    };
    let (loose, tight) = (coef(0.2), coef(0.1));
    assert!(tight.coefficient >= loose.coefficient);
    for pt in [&loose, &tight] {
        for c in &pt.checks {
            assert!(c.product <= pt.target, "{c:?}");
        }
    }
}
