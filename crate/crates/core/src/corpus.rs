//! Built-in worked examples, all driven by a standard Wiener process.

use crate::config::Problem;
use crate::expr::Expr;
use crate::model::{uniform_grid, DiffusionSpec, PayoffTriple, PiecewiseFn};

#[derive(Debug, Clone)]
pub struct Example {
    pub id: &'static str,
    pub summary: &'static str,
    pub problem: Problem,
    /// Start point used by the Monte Carlo checks.
    pub x0: f64,
}

const NEG: f64 = f64::NEG_INFINITY;
const POS: f64 = f64::INFINITY;

fn x() -> Expr {
    Expr::x()
}

fn pw(pieces: Vec<(f64, f64, Expr)>, window: (f64, f64)) -> PiecewiseFn {
    PiecewiseFn::with_scan_window(pieces, window).expect("built-in payoffs are continuous")
}

fn problem(name: &str, r: f64, lo: f64, hi: f64, n: usize, f: PiecewiseFn, g: PiecewiseFn, h: PiecewiseFn) -> Problem {
    Problem {
        name: name.to_string(),
        diffusion: DiffusionSpec::wiener(r, uniform_grid(lo, hi, n)).expect("valid built-in grid"),
        payoffs: PayoffTriple::new(f, g, h),
        eq_tol: None,
    }
}

/// `|x| + 1` everywhere for f; g and h differ from it only on (-1, 1).
pub fn ex_4_2() -> Example {
    let w = (-3.0, 3.0);
    let outer = x().abs() + 1.0;
    let f = pw(vec![(NEG, POS, outer.clone())], w);
    let g = pw(
        vec![(NEG, -1.0, outer.clone()), (-1.0, 1.0, 2.0 * x().powi(2)), (1.0, POS, outer.clone())],
        w,
    );
    let h = pw(
        vec![(NEG, -1.0, outer.clone()), (-1.0, 1.0, Expr::c(3.0) - x().powi(2)), (1.0, POS, outer)],
        w,
    );
    Example {
        id: "ex_4_2",
        summary: "local-time push only: g < f < h on (-1, 1)",
        problem: problem("ex_4_2", 0.1, w.0, w.1, 6001, f, g, h),
        x0: 0.5,
    }
}

pub fn ex_4_3() -> Example {
    let w = (-6.0, 8.0);
    let f = pw(vec![(NEG, 2.0, 2.0 * x()), (2.0, POS, x().powi(2))], w);
    let g = pw(vec![(NEG, POS, 2.0 * x() - 4.0)], w);
    let h = pw(vec![(NEG, POS, x().powi(2) + 2.0)], w);
    Example {
        id: "ex_4_3",
        summary: "local-time push at x = 2 and a Lebesgue rate",
        problem: problem("ex_4_3", 1.0 / 9.0, w.0, w.1, 14001, f, g, h),
        x0: 0.0,
    }
}

pub fn ex_4_4() -> Example {
    let w = (-3.0, 5.0);
    let f = pw(vec![(NEG, POS, (x() - 1.0).powi(2) + 1.0)], w);
    let g = pw(vec![(NEG, 0.0, x().abs() + 2.0), (0.0, POS, Expr::c(2.0))], w);
    let h = pw(vec![(NEG, 0.0, x().powi(2) + 2.0), (0.0, POS, Expr::c(2.0))], w);
    Example {
        id: "ex_4_4",
        summary: "Lebesgue-rate randomization on (-1, 0)",
        problem: problem("ex_4_4", 0.1, w.0, w.1, 8001, f, g, h),
        x0: 1.0,
    }
}

pub fn ex_5_1() -> Example {
    let w = (-8.0, 8.0);
    let f = pw(vec![(NEG, POS, x().powi(2))], w);
    let g = pw(vec![(NEG, POS, x().powi(2) + 10.0)], w);
    let h = pw(vec![(NEG, POS, x().powi(2) - 1.0)], w);
    Example {
        id: "ex_5_1",
        summary: "only epsilon-equilibria: h < f < g everywhere",
        problem: problem("ex_5_1", 0.1, w.0, w.1, 64001, f, g, h),
        x0: 0.0,
    }
}

pub fn ex_5_2() -> Example {
    let w = (-8.0, 8.0);
    let f = pw(vec![(NEG, POS, x().powi(2))], w);
    let g = pw(vec![(NEG, POS, x().powi(2) + 10.0)], w);
    let h = pw(
        vec![
            (NEG, -2.0, x().powi(2) + 7.0),
            (-2.0, 2.0, 8.0 * x().abs() - 5.0),
            (2.0, POS, x().powi(2) + 7.0),
        ],
        w,
    );
    Example {
        id: "ex_5_2",
        summary: "pure equilibrium without ordered payoffs",
        problem: problem("ex_5_2", 0.1, w.0, w.1, 16001, f, g, h),
        x0: 0.0,
    }
}

pub fn ex_5_4() -> Example {
    let w = (-3.0, 3.0);
    let outer = x().powi(2) + 3.0;
    let f = pw(vec![(NEG, -1.0, outer.clone()), (-1.0, 1.0, 4.0 * x().abs()), (1.0, POS, outer.clone())], w);
    let g = pw(vec![(NEG, POS, outer.clone())], w);
    let h = pw(
        vec![
            (NEG, -1.0, outer.clone()),
            (-1.0, 0.5, Expr::c(3.0) - x()),
            (0.5, 1.0, 3.0 * x() + 1.0),
            (1.0, POS, outer),
        ],
        w,
    );
    Example {
        id: "ex_5_4",
        summary: "neither existence nor non-existence test applies",
        problem: problem("ex_5_4", 0.1, w.0, w.1, 6001, f, g, h),
        x0: 0.0,
    }
}

pub fn register_examples() -> Vec<Example> {
    vec![ex_4_2(), ex_4_3(), ex_4_4(), ex_5_1(), ex_5_2(), ex_5_4()]
}

pub fn example(id: &str) -> Option<Example> {
    register_examples().into_iter().find(|e| e.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_contents() {
        let c = register_examples();
        assert_eq!(c.len(), 6);
        let p = &example("ex_4_3").unwrap().problem.payoffs;
        assert_eq!(p.eval(0.0), (0.0, -4.0, 2.0));
        let p = &example("ex_5_4").unwrap().problem.payoffs;
        assert_eq!((p.f.eval(0.5), p.g.eval(0.5)), (2.0, 3.25));
        assert!(example("ex_9_9").is_none());
    }
}
