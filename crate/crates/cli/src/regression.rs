//! The regression run over the built-in corpus.

use std::fmt::Write as _;
use std::fs;

use dynkin_core::corpus::{register_examples, Example};
use dynkin_core::error::Error as CoreError;
use dynkin_core::sim::run_game;
use dynkin_core::solver::{brute_force_oracle, interpolate, oracle_time_step, verify_martingale_conditions};
use dynkin_core::verifier::verify;

use crate::{sim_params, solve, strategies, CliError, Outcome, RunManifest, Source, StrategyKind};

const ORACLE_STATES: usize = 200;
const ORACLE_TOL: f64 = 2e-2;
const CLOSED_FORM_TOL: f64 = 1e-3;
const MC_SLACK: f64 = 0.02;
const REGRESSION_PATHS: usize = 20_000;

/// Root of `tanh(b k) = 2 / (b k)` by bisection, `k = sqrt(2r)`.
pub fn square_payoff_threshold(r: f64) -> f64 {
    let k = (2.0 * r).sqrt();
    let phi = |b: f64| (b * k).tanh() - 2.0 / (b * k);
    let (mut a, mut b) = (1e-6 / k, 100.0 / k);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if phi(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Closed-form values known for some corpus entries.
pub fn closed_form(id: &str, r: f64) -> Option<Box<dyn Fn(f64) -> Option<f64>>> {
    let k = (2.0 * r).sqrt();
    match id {
        "ex_4_2" => Some(Box::new(|x: f64| Some(x.abs() + 1.0))),
        "ex_4_3" => Some(Box::new(|x: f64| Some(if x <= 2.0 { 2.0 * x } else { x * x }))),
        "ex_4_4" => {
            let c = 2.0 * (1.0 - (-2.0 * k).exp()) / ((2.0 * k).exp() - (-2.0 * k).exp());
            Some(Box::new(move |x: f64| {
                (0.0..=2.0).contains(&x).then(|| c * (x * k).exp() + (2.0 - c) * (-x * k).exp())
            }))
        }
        "ex_5_1" => {
            let b = square_payoff_threshold(r);
            Some(Box::new(move |x: f64| {
                Some(if x.abs() >= b { x * x } else { b * b * (x * k).cosh() / (b * k).cosh() })
            }))
        }
        _ => None,
    }
}

/// (sufficient, nonexistence, inconclusive) as stated for the corpus entry.
pub fn expected_verdict(id: &str) -> Option<(bool, bool, bool)> {
    match id {
        "ex_4_2" | "ex_5_1" => Some((false, true, false)),
        "ex_5_2" => Some((true, false, false)),
        "ex_5_4" => Some((false, false, true)),
        _ => None,
    }
}

pub struct Row {
    pub id: &'static str,
    pub reference: &'static str,
    pub v_error: f64,
    pub v_tol: f64,
    pub certificate: bool,
    pub x0: f64,
    pub value_x0: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub mc_tol: f64,
    pub strategies: &'static str,
    pub verdict: (bool, bool, bool),
    pub verdict_ok: Option<bool>,
}

impl Row {
    pub fn mc_gap(&self) -> f64 {
        (self.mc_estimate - self.value_x0).abs()
    }

    pub fn pass(&self) -> bool {
        self.v_error <= self.v_tol && self.certificate && self.mc_gap() <= self.mc_tol && self.verdict_ok != Some(false)
    }
}

pub fn check_example(ex: &Example, m: &RunManifest) -> Result<Row, CliError> {
    let problem = match m.grid_n {
        Some(n) => ex.problem.with_grid_n(n)?,
        None => ex.problem.clone(),
    };
    let solved = solve(&problem, m.tol)?;
    let sol = &solved.sol;
    let dif = &problem.diffusion;

    let (reference, v_error, v_tol) = match closed_form(ex.id, dif.r) {
        Some(cf) => {
            let e = sol
                .grid
                .iter()
                .zip(&sol.v)
                .filter_map(|(&x, &v)| cf(x).map(|c| (c - v).abs()))
                .fold(0.0, f64::max);
            ("closed form", e, CLOSED_FORM_TOL)
        }
        None => {
            let (lo, hi) = (dif.lo(), dif.hi());
            let o = brute_force_oracle(&solved.assoc, dif, ORACLE_STATES, oracle_time_step(dif, lo, hi, ORACLE_STATES))?;
            let e = o
                .grid
                .iter()
                .zip(&o.v)
                .map(|(&x, &v)| (interpolate(&sol.grid, &sol.v, x) - v).abs())
                .fold(0.0, f64::max);
            ("chain oracle", e, ORACLE_TOL)
        }
    };
    let certificate = verify_martingale_conditions(sol, dif, 1e-6 * sol.scale()).pass;

    let pair = strategies(&problem, &solved, m.epsilon)?;
    let params = sim_params(&problem, m, REGRESSION_PATHS)?;
    let rep = run_game(dif, &problem.payoffs, (&pair.p1, &pair.p2), ex.x0, &params).map_err(CoreError::from)?;
    let eps = match pair.kind {
        StrategyKind::Epsilon => pair.calibration.as_ref().map_or(0.0, |c| c.epsilon),
        _ => 0.0,
    };

    let ver = verify(sol, &solved.partition, &problem.payoffs, dif, 1e-6 * sol.scale())?;
    let got = (ver.verdict.sufficient_holds, ver.verdict.nonexistence_holds, ver.verdict.inconclusive);
    Ok(Row {
        id: ex.id,
        reference,
        v_error,
        v_tol,
        certificate,
        x0: ex.x0,
        value_x0: sol.value_at(ex.x0),
        mc_estimate: rep.estimate,
        mc_se: rep.std_error,
        mc_tol: 3.0 * rep.std_error + MC_SLACK + eps,
        strategies: pair.kind.label(),
        verdict: got,
        verdict_ok: expected_verdict(ex.id).map(|e| e == got),
    })
}

pub const SUMMARY_HEADER: &str = "id,reference,v_error,v_tol,certificate,x0,value_x0,mc_estimate,mc_se,mc_gap,mc_tol,strategies,sufficient,nonexistence,inconclusive,verdict_expected,pass";

pub fn summary_line(r: &Row) -> String {
    format!(
        "{},{},{:.6e},{:.1e},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{}",
        r.id,
        r.reference,
        r.v_error,
        r.v_tol,
        r.certificate,
        r.x0,
        r.value_x0,
        r.mc_estimate,
        r.mc_se,
        r.mc_gap(),
        r.mc_tol,
        r.strategies,
        r.verdict.0,
        r.verdict.1,
        r.verdict.2,
        match r.verdict_ok {
            Some(true) => "match",
            Some(false) => "mismatch",
            None => "n/a",
        },
        if r.pass() { "pass" } else { "fail" }
    )
}

pub fn run_examples(m: &RunManifest) -> Result<Outcome, CliError> {
    let corpus: Vec<Example> = match &m.source {
        Source::Example(id) => {
            let ex = register_examples().into_iter().filter(|e| e.id == id).collect::<Vec<_>>();
            if ex.is_empty() {
                return Err(CliError::Validation(format!("unknown example `{id}`")));
            }
            ex
        }
        Source::Corpus => register_examples(),
        Source::Config(_) => return Err(CliError::Validation("examples mode takes --example or nothing".into())),
    };
    let mut out = Outcome::default();
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    let mut failed = Vec::new();
    for ex in &corpus {
        let row = check_example(ex, m)?;
        let line = summary_line(&row);
        let _ = writeln!(text, "{line}");
        out.messages.push(format!(
            "{}: V sup-error {:.2e}, MC gap {:.4}, {}",
            row.id,
            row.v_error,
            row.mc_gap(),
            if row.pass() { "pass" } else { "fail" }
        ));
        if !row.pass() {
            failed.push(row.id);
        }
    }
    let path = m.out.join("examples_summary.csv");
    fs::write(&path, text)?;
    out.files.push(path);
    if failed.is_empty() {
        Ok(out)
    } else {
        for msg in &out.messages {
            eprintln!("{msg}");
        }
        Err(CliError::Regression(format!("regression failures: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_root() {
        let b = square_payoff_threshold(0.1);
        let k = 0.2f64.sqrt();
        assert!(((b * k).tanh() - 2.0 / (b * k)).abs() < 1e-12);
        assert!((b - 4.61823).abs() < 1e-4);
    }

    #[test]
    fn closed_forms_meet_payoffs_at_the_edges() {
        let u = closed_form("ex_4_4", 0.1).unwrap();
        assert!((u(0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((u(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(u(3.0).is_none());
    }
}
