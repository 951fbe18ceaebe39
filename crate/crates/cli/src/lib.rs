//! Pipelines behind the `dynkin` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use dynkin_core::calibration::{calibrate_epsilon_strategies, EpsilonCalibration};
use dynkin_core::config::{Problem, Solved};
use dynkin_core::corpus::{example, register_examples};
use dynkin_core::error::{Error as CoreError, SolverError, StrategyError};
use dynkin_core::io::{boundaries_json, write_json, write_value_file};
use dynkin_core::model::uniform_grid;
use dynkin_core::sim::{default_horizon, run_game, SimParams, SimulationReport};
use dynkin_core::solver::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use dynkin_core::strategy::{build_nash_strategies, check_simplified_condition, pure_stop_sets, Player, RandomizedStrategy};
use dynkin_core::verifier::{verify, VerificationReport};

pub mod regression;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Solve,
    Strategies,
    Simulate,
    Verify,
    Examples,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Config(PathBuf),
    Example(String),
    /// Every registered example (examples mode only).
    Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub mode: Mode,
    pub source: Source,
    pub out: PathBuf,
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub x0: Option<f64>,
}

impl RunManifest {
    pub fn new(mode: Mode, source: Source, out: impl Into<PathBuf>) -> RunManifest {
        RunManifest {
            mode,
            source,
            out: out.into(),
            grid_n: None,
            tol: None,
            epsilon: None,
            paths: None,
            dt: None,
            seed: None,
            x0: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Regression(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Regression(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match &e {
            CoreError::Solver(SolverError::NonConvergence { .. } | SolverError::NonContraction { .. })
            | CoreError::Strategy(StrategyError::CalibrationFailure { .. }) => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Validation(format!("io: {e}"))
    }
}

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 1;
const STRATEGY_SAMPLES: usize = 401;

/// A loaded problem plus the start point for simulations.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub problem: Problem,
    pub x0: f64,
}

pub fn load(m: &RunManifest) -> Result<Loaded, CliError> {
    let (problem, x0) = match &m.source {
        Source::Example(id) => {
            let ex = example(id).ok_or_else(|| {
                let ids: Vec<&str> = register_examples().iter().map(|e| e.id).collect();
                CliError::Validation(format!("unknown example `{id}` (known: {})", ids.join(", ")))
            })?;
            (ex.problem, ex.x0)
        }
        Source::Config(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let problem = Problem::from_json_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let x0 = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v.get("x0").and_then(Value::as_f64))
                .unwrap_or(0.0);
            (problem, x0)
        }
        Source::Corpus => return Err(CliError::Validation("a config or an example id is required".into())),
    };
    let problem = match m.grid_n {
        Some(n) => problem.with_grid_n(n)?,
        None => problem,
    };
    let x0 = m.x0.unwrap_or(x0).clamp(problem.diffusion.lo(), problem.diffusion.hi());
    Ok(Loaded { problem, x0 })
}

pub fn solve(problem: &Problem, tol: Option<f64>) -> Result<Solved, CliError> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(CliError::Validation(format!("--tol must be > 0, got {tol}")));
    }
    Ok(problem.solve_with(tol, DEFAULT_MAX_ITER)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Nash,
    Pure,
    Epsilon,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Nash => "nash",
            StrategyKind::Pure => "pure",
            StrategyKind::Epsilon => "epsilon",
        }
    }
}

pub struct StrategyPair {
    pub kind: StrategyKind,
    pub p1: RandomizedStrategy,
    pub p2: RandomizedStrategy,
    pub calibration: Option<EpsilonCalibration>,
}

/// The explicit equilibrium when its hypothesis holds, the pure stop sets
/// when they form an equilibrium, and calibrated epsilon-strategies
/// otherwise. An explicit `epsilon` forces calibration.
pub fn strategies(problem: &Problem, solved: &Solved, epsilon: Option<f64>) -> Result<StrategyPair, CliError> {
    let (sol, part, pay, dif) = (&solved.sol, &solved.partition, &problem.payoffs, &problem.diffusion);
    if epsilon.is_none() {
        if check_simplified_condition(part) {
            let (p1, p2) = build_nash_strategies(sol, part, pay, dif).map_err(CoreError::from)?;
            return Ok(StrategyPair { kind: StrategyKind::Nash, p1, p2, calibration: None });
        }
        if dynkin_core::verifier::check_pure_ne_sufficient(sol, part) {
            let (s1, s2) = pure_stop_sets(sol, part, pay).map_err(CoreError::from)?;
            return Ok(StrategyPair {
                kind: StrategyKind::Pure,
                p1: RandomizedStrategy::pure(Player::One, s1),
                p2: RandomizedStrategy::pure(Player::Two, s2),
                calibration: None,
            });
        }
    }
    let eps = epsilon.unwrap_or(DEFAULT_EPSILON);
    let (p1, p2, cal) = calibrate_epsilon_strategies(sol, part, pay, dif, eps).map_err(CoreError::from)?;
    Ok(StrategyPair { kind: StrategyKind::Epsilon, p1, p2, calibration: Some(cal) })
}

pub fn sim_params(problem: &Problem, m: &RunManifest, default_paths: usize) -> Result<SimParams, CliError> {
    let p = SimParams::new(
        m.dt.unwrap_or(DEFAULT_DT),
        default_horizon(&problem.payoffs, &problem.diffusion),
        m.paths.unwrap_or(default_paths),
        m.seed.unwrap_or(DEFAULT_SEED),
    );
    p.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(p)
}

pub fn calibration_json(c: &EpsilonCalibration) -> Value {
    json!({
        "epsilon": c.epsilon,
        "rates": c.rates.iter().map(|r| json!({
            "player": r.player,
            "lo": if r.lo.is_finite() { json!(r.lo) } else { Value::Null },
            "hi": if r.hi.is_finite() { json!(r.hi) } else { Value::Null },
            "rate": r.rate,
        })).collect::<Vec<_>>(),
        "atoms": c.atoms.iter().map(|(p, a)| json!({"player": p, "x": a.x, "gamma": a.gamma})).collect::<Vec<_>>(),
        "envelope": c.envelope,
        "points": c.points.iter().map(|p| json!({
            "player": p.player,
            "x": p.x,
            "case": format!("{:?}", p.case),
            "atom": p.atom,
            "coefficient": p.coefficient,
            "target": p.target,
            "products": p.checks.iter().map(|k| k.product).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

fn write_strategies(dir: &Path, problem: &Problem, pair: &StrategyPair) -> Result<(), CliError> {
    let samples = uniform_grid(problem.diffusion.lo(), problem.diffusion.hi(), STRATEGY_SAMPLES);
    for (name, s) in [("strategy_p1.json", &pair.p1), ("strategy_p2.json", &pair.p2)] {
        let mut v = s.to_json(&samples);
        v["kind"] = json!(pair.kind.label());
        write_json(&dir.join(name), &v)?;
    }
    if let Some(c) = &pair.calibration {
        write_json(&dir.join("calibration.json"), &calibration_json(c))?;
    }
    Ok(())
}

fn write_verification(dir: &Path, rep: &VerificationReport) -> Result<(), CliError> {
    write_json(&dir.join("verdict.json"), &rep.to_json())?;
    if rep.best_responses.is_empty() {
        return Ok(());
    }
    let mut text = String::from("x,player,w,gain,response_stop\n");
    for b in &rep.best_responses {
        for i in 0..b.grid.len() {
            text.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{}\n",
                b.grid[i],
                b.player.index(),
                b.w[i],
                b.gain[i],
                u8::from(b.response_stop_mask[i])
            ));
        }
    }
    fs::write(dir.join("best_response.csv"), text)?;
    Ok(())
}

/// What a run produced, for the caller to print.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub messages: Vec<String>,
}

pub fn init_threads() {
    if let Some(n) = std::env::var("DYNKIN_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(m: &RunManifest) -> Result<Outcome, CliError> {
    fs::create_dir_all(&m.out).map_err(|e| CliError::Validation(format!("{}: {e}", m.out.display())))?;
    if m.mode == Mode::Examples {
        return regression::run_examples(m);
    }
    let loaded = load(m)?;
    let problem = &loaded.problem;
    let solved = solve(problem, m.tol)?;
    let mut out = Outcome::default();
    let dir = &m.out;
    let file = |name: &str, out: &mut Outcome| {
        let p = dir.join(name);
        out.files.push(p);
    };
    let scale = solved.sol.scale();
    out.messages.push(format!(
        "{}: {} nodes, {} iterations, free boundaries d1 {:?} d2 {:?}",
        problem.name,
        solved.sol.grid.len(),
        solved.sol.iterations,
        solved.sol.free_boundaries.d1,
        solved.sol.free_boundaries.d2
    ));
    let all = m.mode == Mode::All;

    if matches!(m.mode, Mode::Solve) || all {
        write_value_file(&dir.join("value.csv"), &solved.sol, &problem.payoffs)?;
        write_json(&dir.join("boundaries.json"), &boundaries_json(&solved.sol, &solved.partition, &problem.payoffs)?)?;
        write_json(&dir.join("problem.json"), &problem.to_json())?;
        file("value.csv", &mut out);
        file("boundaries.json", &mut out);
        file("problem.json", &mut out);
    }
    let pair = if matches!(m.mode, Mode::Strategies | Mode::Simulate) || all {
        let pair = strategies(problem, &solved, m.epsilon)?;
        write_strategies(dir, problem, &pair)?;
        file("strategy_p1.json", &mut out);
        file("strategy_p2.json", &mut out);
        if pair.calibration.is_some() {
            file("calibration.json", &mut out);
        }
        out.messages.push(format!("strategies: {}", pair.kind.label()));
        Some(pair)
    } else {
        None
    };
    if matches!(m.mode, Mode::Simulate) || all {
        let pair = pair.as_ref().expect("strategies built above");
        let params = sim_params(problem, m, DEFAULT_PATHS)?;
        let rep: SimulationReport = run_game(&problem.diffusion, &problem.payoffs, (&pair.p1, &pair.p2), loaded.x0, &params)
            .map_err(CoreError::from)?;
        let mut v = rep.to_json();
        v["value"] = json!(solved.sol.value_at(loaded.x0));
        v["strategies"] = json!(pair.kind.label());
        write_json(&dir.join("report.json"), &v)?;
        file("report.json", &mut out);
        out.messages.push(format!(
            "simulated J({}) = {:.6} +- {:.6}, value {:.6}",
            loaded.x0,
            rep.estimate,
            rep.std_error,
            solved.sol.value_at(loaded.x0)
        ));
    }
    if matches!(m.mode, Mode::Verify) || all {
        let rep = verify(&solved.sol, &solved.partition, &problem.payoffs, &problem.diffusion, 1e-6 * scale)?;
        write_verification(dir, &rep)?;
        file("verdict.json", &mut out);
        if !rep.best_responses.is_empty() {
            file("best_response.csv", &mut out);
        }
        out.messages.push(format!("verdict: {}", rep.to_json()));
    }
    Ok(out)
}
