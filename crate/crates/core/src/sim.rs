//! Monte Carlo engine for the game: Euler paths, hazard accumulation against
//! unit exponential clocks, local-time bands and common-random-number gains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::SimError;
use crate::model::{DiffusionSpec, PayoffTriple};
use crate::sets::PointSet;
use crate::strategy::{Player, RandomizedStrategy};

const CHUNK: usize = 256;
const TABLE_MIN: usize = 4097;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub t_max: f64,
    /// Local-time band half-width; `None` picks `max(2 sqrt(dt) sigma(y), dx)` per atom.
    pub band_halfwidth: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimParams {
    pub fn new(dt: f64, t_max: f64, n_paths: usize, seed: u64) -> SimParams {
        SimParams {
            dt,
            t_max,
            band_halfwidth: None,
            n_paths,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) {
            return Err(SimError::InvalidParams(format!("t_max = {} below dt", self.t_max)));
        }
        if let Some(h) = self.band_halfwidth {
            if !(h > 0.0) {
                return Err(SimError::InvalidParams(format!("band half-width must be > 0, got {h}")));
            }
        }
        if self.n_paths == 0 {
            return Err(SimError::InvalidParams("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_max / self.dt).ceil() as usize
    }
}

/// Horizon after which the discounted payoff envelope is below `1e-3` of its scale.
pub fn default_horizon(payoffs: &PayoffTriple, diffusion: &DiffusionSpec) -> f64 {
    let env = payoffs.max_abs(&diffusion.grid);
    if diffusion.r <= 0.0 {
        return 1e3;
    }
    let t = (env / (1e-3 * (1.0 + env))).ln() / diffusion.r;
    t.max(1.0)
}

/// Per-path random source: two clocks first, then the Gaussian increments.
pub(crate) struct PathRng(ChaCha8Rng);

impl PathRng {
    pub(crate) fn new(seed: u64, path: u64) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        PathRng(rng)
    }

    pub(crate) fn clock(&mut self) -> f64 {
        self.0.sample(Exp1)
    }

    pub(crate) fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

/// Uniform lookup table with linear interpolation.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    lo: f64,
    inv_dx: f64,
    vals: Vec<f64>,
}

impl Table {
    pub(crate) fn build(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Table {
        let dx = (hi - lo) / (n - 1) as f64;
        Table {
            lo,
            inv_dx: 1.0 / dx,
            vals: (0..n).map(|i| f(lo + i as f64 * dx)).collect(),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let s = ((x - self.lo) * self.inv_dx).max(0.0);
        let i = (s as usize).min(self.vals.len() - 2);
        let t = (s - i as f64).min(1.0);
        self.vals[i] + t * (self.vals[i + 1] - self.vals[i])
    }
}

#[derive(Debug, Clone)]
enum Coeffs {
    Const { mu: f64, sigma: f64 },
    Table { mu: Table, sigma: Table },
}

/// Reflected Euler-Maruyama step on the computational interval.
#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    coeffs: Coeffs,
    pub(crate) lo: f64,
    pub(crate) hi: f64,
    pub(crate) dt: f64,
    sqdt: f64,
}

impl Stepper {
    pub(crate) fn new(diffusion: &DiffusionSpec, dt: f64) -> Stepper {
        let (lo, hi) = (diffusion.lo(), diffusion.hi());
        let coeffs = match (diffusion.mu.as_const(), diffusion.sigma.as_const()) {
            (Some(mu), Some(sigma)) => Coeffs::Const { mu, sigma },
            _ => {
                let n = diffusion.grid.len().max(TABLE_MIN);
                Coeffs::Table {
                    mu: Table::build(lo, hi, n, |x| diffusion.mu_at(x)),
                    sigma: Table::build(lo, hi, n, |x| diffusion.sigma_at(x)),
                }
            }
        };
        Stepper {
            coeffs,
            lo,
            hi,
            dt,
            sqdt: dt.sqrt(),
        }
    }

    #[inline]
    pub(crate) fn step(&self, x: f64, xi: f64) -> f64 {
        let (mu, sigma) = match &self.coeffs {
            Coeffs::Const { mu, sigma } => (*mu, *sigma),
            Coeffs::Table { mu, sigma } => (mu.eval(x), sigma.eval(x)),
        };
        let mut y = x + mu * self.dt + sigma * self.sqdt * xi;
        if y < self.lo {
            y = 2.0 * self.lo - y;
        }
        if y > self.hi {
            y = 2.0 * self.hi - y;
        }
        y.clamp(self.lo, self.hi)
    }
}

/// Handle on a reproducible batch of Euler paths; paths are generated on demand.
#[derive(Debug, Clone)]
pub struct PathBatch {
    stepper: Stepper,
    pub x0: f64,
    pub params: SimParams,
}

pub fn simulate_paths(diffusion: &DiffusionSpec, x0: f64, params: SimParams) -> Result<PathBatch, SimError> {
    params.validate()?;
    if !(x0 >= diffusion.lo() && x0 <= diffusion.hi()) {
        return Err(SimError::InvalidParams(format!("x0 = {x0} outside the computational domain")));
    }
    Ok(PathBatch {
        stepper: Stepper::new(diffusion, params.dt),
        x0,
        params,
    })
}

impl PathBatch {
    /// States `X_0 .. X_K` of path `i`, `K = ceil(t_max / dt)`.
    pub fn path(&self, i: usize) -> Vec<f64> {
        let mut rng = PathRng::new(self.params.seed, i as u64);
        rng.clock();
        rng.clock();
        let mut x = self.x0;
        let mut out = Vec::with_capacity(self.params.steps() + 1);
        out.push(x);
        for _ in 0..self.params.steps() {
            x = self.stepper.step(x, rng.normal());
            out.push(x);
        }
        out
    }

    /// `X_t` on every path, with `t` rounded to the step grid.
    pub fn sample_at(&self, t: f64) -> Vec<f64> {
        let k = (t / self.params.dt).round() as usize;
        (0..self.params.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = PathRng::new(self.params.seed, i as u64);
                rng.clock();
                rng.clock();
                let mut x = self.x0;
                for _ in 0..k {
                    x = self.stepper.step(x, rng.normal());
                }
                x
            })
            .collect()
    }
}

fn default_band(diffusion: &DiffusionSpec, y: f64, dt: f64) -> f64 {
    let g = &diffusion.grid;
    let i = g.partition_point(|v| *v <= y).clamp(1, g.len() - 1);
    let dx = g[i] - g[i - 1];
    (2.0 * dt.sqrt() * diffusion.sigma_at(y)).max(dx)
}

/// Occupation-band increments `sigma(y)^2 / (2 h) * dt * 1{|X_k - y| < h}`.
pub fn approx_local_time(path: &[f64], y: f64, diffusion: &DiffusionSpec, params: &SimParams) -> Vec<f64> {
    let h = params.band_halfwidth.unwrap_or_else(|| default_band(diffusion, y, params.dt));
    let s = diffusion.sigma_at(y);
    let unit = s * s / (2.0 * h) * params.dt;
    path.iter()
        .take(path.len().saturating_sub(1))
        .map(|x| if (x - y).abs() < h { unit } else { 0.0 })
        .collect()
}

/// A strategy prepared for fast stepping.
#[derive(Debug, Clone)]
struct Compiled {
    stop: PointSet,
    iso_band: f64,
    rate: Option<Table>,
    /// (location, half-width, hazard per step while inside the band)
    atoms: Vec<(f64, f64, f64)>,
}

impl Compiled {
    fn new(s: &RandomizedStrategy, diffusion: &DiffusionSpec, params: &SimParams) -> Compiled {
        let (lo, hi) = (diffusion.lo(), diffusion.hi());
        let n = diffusion.grid.len().max(TABLE_MIN);
        let rate = (!s.rate.is_zero()).then(|| Table::build(lo, hi, n, |x| s.rate_at(x)));
        let atoms = s
            .atoms
            .iter()
            .filter(|a| a.gamma > 0.0)
            .map(|a| {
                let h = params.band_halfwidth.unwrap_or_else(|| default_band(diffusion, a.x, params.dt));
                let sg = diffusion.sigma_at(a.x);
                (a.x, h, a.gamma * sg * sg / (2.0 * h) * params.dt)
            })
            .collect();
        let g = &diffusion.grid;
        let iso_band = g.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
        Compiled {
            stop: s.stop_set.clone(),
            iso_band,
            rate,
            atoms,
        }
    }

    #[inline]
    fn hazard(&self, x: f64, dt: f64) -> f64 {
        let mut inc = match &self.rate {
            Some(t) => t.eval(x) * dt,
            None => 0.0,
        };
        for &(y, h, c) in &self.atoms {
            if (x - y).abs() < h {
                inc += c;
            }
        }
        inc
    }

    /// Fraction of the step at which the pure stop set is met, and where.
    #[inline]
    fn pure_hit(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        if let Some(s) = self.stop.first_hit(a, b) {
            let th = if b == a { 0.0 } else { ((s - a) / (b - a)).clamp(0.0, 1.0) };
            return Some((th, s));
        }
        self.stop
            .points
            .iter()
            .find(|&&p| (b - p).abs() < 0.5 * self.iso_band)
            .map(|&p| (1.0, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    P1First,
    P2First,
    Simultaneous,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Discounted payoff, zero when censored.
    pub payoff: f64,
    pub time: f64,
    pub x: f64,
}

/// One step of a traced path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub t: f64,
    pub x: f64,
    pub psi1: f64,
    pub psi2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
}

/// Game engine with both strategies compiled.
#[derive(Debug, Clone)]
struct Game<'a> {
    stepper: Stepper,
    payoffs: &'a PayoffTriple,
    r: f64,
    s1: Compiled,
    s2: Compiled,
    steps: usize,
}

impl<'a> Game<'a> {
    fn new(
        diffusion: &DiffusionSpec,
        payoffs: &'a PayoffTriple,
        s1: &RandomizedStrategy,
        s2: &RandomizedStrategy,
        params: &SimParams,
    ) -> Game<'a> {
        Game {
            stepper: Stepper::new(diffusion, params.dt),
            payoffs,
            r: diffusion.r,
            s1: Compiled::new(s1, diffusion, params),
            s2: Compiled::new(s2, diffusion, params),
            steps: params.steps(),
        }
    }

    fn settle(&self, kind: OutcomeKind, t: f64, x: f64) -> Outcome {
        let w = match kind {
            OutcomeKind::P1First => self.payoffs.f.eval(x),
            OutcomeKind::P2First => self.payoffs.g.eval(x),
            OutcomeKind::Simultaneous => self.payoffs.h.eval(x),
            OutcomeKind::Censored => 0.0,
        };
        Outcome {
            kind,
            payoff: if kind == OutcomeKind::Censored { 0.0 } else { (-self.r * t).exp() * w },
            time: t,
            x,
        }
    }

    /// Plays one path with the given clocks and noise source.
    fn play(&self, x0: f64, rng: &mut PathRng, mut trace: Option<&mut Vec<TraceStep>>) -> Outcome {
        let e1 = rng.clock();
        let e2 = rng.clock();
        let dt = self.stepper.dt;
        let (a1, a2) = (self.s1.stop.contains(x0), self.s2.stop.contains(x0));
        match (a1, a2) {
            (true, true) => return self.settle(OutcomeKind::Simultaneous, 0.0, x0),
            (true, false) => return self.settle(OutcomeKind::P1First, 0.0, x0),
            (false, true) => return self.settle(OutcomeKind::P2First, 0.0, x0),
            _ => {}
        }
        let (mut psi1, mut psi2) = (0.0f64, 0.0f64);
        let mut x = x0;
        for k in 0..self.steps {
            let t = k as f64 * dt;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceStep { t, x, psi1, psi2 });
            }
            let y = self.stepper.step(x, rng.normal());
            let cross = |c: &Compiled, psi: &mut f64, e: f64| -> Option<(f64, f64)> {
                let inc = c.hazard(x, dt);
                let rand = if *psi + inc >= e && inc > 0.0 {
                    let th = ((e - *psi) / inc).clamp(0.0, 1.0);
                    Some((th, x + th * (y - x)))
                } else {
                    None
                };
                *psi += inc;
                match (c.pure_hit(x, y), rand) {
                    (Some(p), Some(q)) => Some(if p.0 <= q.0 { p } else { q }),
                    (p, q) => p.or(q),
                }
            };
            let c1 = cross(&self.s1, &mut psi1, e1);
            let c2 = cross(&self.s2, &mut psi2, e2);
            let done = match (c1, c2) {
                (None, None) => None,
                (Some((th, z)), None) => Some((OutcomeKind::P1First, th, z)),
                (None, Some((th, z))) => Some((OutcomeKind::P2First, th, z)),
                (Some((t1, z1)), Some((t2, z2))) => Some(if (t1 - t2).abs() <= 1e-12 {
                    (OutcomeKind::Simultaneous, t1, z1)
                } else if t1 < t2 {
                    (OutcomeKind::P1First, t1, z1)
                } else {
                    (OutcomeKind::P2First, t2, z2)
                }),
            };
            if let Some((kind, th, z)) = done {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(TraceStep {
                        t: t + dt,
                        x: y,
                        psi1,
                        psi2,
                    });
                }
                return self.settle(kind, t + th * dt, z);
            }
            x = y;
        }
        self.settle(OutcomeKind::Censored, self.steps as f64 * dt, x)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub p1_first: usize,
    pub p2_first: usize,
    pub simultaneous: usize,
    pub horizon_censored: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMeans {
    pub p1_first: Option<f64>,
    pub p2_first: Option<f64>,
    pub simultaneous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub x0: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub counts: OutcomeCounts,
    pub outcome_means: OutcomeMeans,
    pub params: SimParams,
}

impl SimulationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "x0": self.x0,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "counts": self.counts,
            "outcome_means": self.outcome_means,
            "params": {
                "dt": self.params.dt,
                "t_max": self.params.t_max,
                "band_halfwidth": self.params.band_halfwidth,
                "n_paths": self.params.n_paths,
                "seed": self.params.seed,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
    sumsq: f64,
    counts: OutcomeCounts,
    by_kind: [f64; 3],
}

impl Acc {
    fn add(&mut self, o: &Outcome) {
        self.n += 1;
        self.sum += o.payoff;
        self.sumsq += o.payoff * o.payoff;
        match o.kind {
            OutcomeKind::P1First => {
                self.counts.p1_first += 1;
                self.by_kind[0] += o.payoff;
            }
            OutcomeKind::P2First => {
                self.counts.p2_first += 1;
                self.by_kind[1] += o.payoff;
            }
            OutcomeKind::Simultaneous => {
                self.counts.simultaneous += 1;
                self.by_kind[2] += o.payoff;
            }
            OutcomeKind::Censored => self.counts.horizon_censored += 1,
        }
    }

    fn merge(mut self, o: &Acc) -> Acc {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
        self.counts.p1_first += o.counts.p1_first;
        self.counts.p2_first += o.counts.p2_first;
        self.counts.simultaneous += o.counts.simultaneous;
        self.counts.horizon_censored += o.counts.horizon_censored;
        for k in 0..3 {
            self.by_kind[k] += o.by_kind[k];
        }
        self
    }
}

fn mean_se(n: usize, sum: f64, sumsq: f64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / nf).sqrt())
}

fn check_game(
    diffusion: &DiffusionSpec,
    strategies: (&RandomizedStrategy, &RandomizedStrategy),
    x0: f64,
    params: &SimParams,
) -> Result<(), SimError> {
    params.validate()?;
    if strategies.0.player != Player::One || strategies.1.player != Player::Two {
        return Err(SimError::InvalidParams("strategies must be given as (player 1, player 2)".into()));
    }
    if !(x0 >= diffusion.lo() && x0 <= diffusion.hi()) {
        return Err(SimError::InvalidParams(format!("x0 = {x0} outside the computational domain")));
    }
    if diffusion.r <= 0.0 && (strategies.0.stop_set.is_empty() || strategies.1.stop_set.is_empty()) {
        return Err(SimError::UndiscountedCensoring);
    }
    Ok(())
}

/// Chunked parallel map with an order-fixed reduction, so results do not
/// depend on the number of worker threads.
fn chunked<A: Send + Sync + Clone>(
    n: usize,
    init: A,
    per_path: impl Fn(usize, &mut A) + Sync,
    merge: impl Fn(A, &A) -> A,
) -> A {
    let chunks: Vec<A> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = init.clone();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                per_path(i, &mut acc);
            }
            acc
        })
        .collect();
    chunks.iter().fold(init, |a, b| merge(a, b))
}

/// Estimates `J(x0; tau_1, tau_2)`.
pub fn run_game(
    diffusion: &DiffusionSpec,
    payoffs: &PayoffTriple,
    strategies: (&RandomizedStrategy, &RandomizedStrategy),
    x0: f64,
    params: &SimParams,
) -> Result<SimulationReport, SimError> {
    check_game(diffusion, strategies, x0, params)?;
    let game = Game::new(diffusion, payoffs, strategies.0, strategies.1, params);
    let acc = chunked(
        params.n_paths,
        Acc::default(),
        |i, acc| {
            let mut rng = PathRng::new(params.seed, i as u64);
            acc.add(&game.play(x0, &mut rng, None));
        },
        |a, b| a.merge(b),
    );
    let (estimate, std_error) = mean_se(acc.n, acc.sum, acc.sumsq);
    let m = |s: f64, c: usize| (c > 0).then(|| s / c as f64);
    Ok(SimulationReport {
        x0,
        estimate,
        std_error,
        counts: acc.counts,
        outcome_means: OutcomeMeans {
            p1_first: m(acc.by_kind[0], acc.counts.p1_first),
            p2_first: m(acc.by_kind[1], acc.counts.p2_first),
            simultaneous: m(acc.by_kind[2], acc.counts.simultaneous),
        },
        params: *params,
    })
}

/// Full per-step record of path `path_index`.
pub fn trace_path(
    diffusion: &DiffusionSpec,
    payoffs: &PayoffTriple,
    strategies: (&RandomizedStrategy, &RandomizedStrategy),
    x0: f64,
    params: &SimParams,
    path_index: usize,
) -> Result<PathTrace, SimError> {
    check_game(diffusion, strategies, x0, params)?;
    let game = Game::new(diffusion, payoffs, strategies.0, strategies.1, params);
    let mut steps = Vec::new();
    let mut rng = PathRng::new(params.seed, path_index as u64);
    let outcome = game.play(x0, &mut rng, Some(&mut steps));
    Ok(PathTrace { steps, outcome })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub label: String,
    pub gain: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub player: u8,
    pub x0: f64,
    pub equilibrium_estimate: f64,
    pub equilibrium_std_error: f64,
    pub gains: Vec<GainEstimate>,
    /// Index into `gains` of the largest gain.
    pub argmax: usize,
}

impl DeviationReport {
    pub fn max_gain(&self) -> &GainEstimate {
        &self.gains[self.argmax]
    }
}

#[derive(Debug, Clone)]
struct GainAcc {
    eq: (f64, f64),
    diffs: Vec<(f64, f64)>,
    n: usize,
}

/// Gains of unilateral deviations by `player`, the opponent held at its
/// equilibrium strategy. Every deviation is played on the same clocks and
/// Gaussian increments as the equilibrium, path by path.
pub fn estimate_deviation_gain(
    diffusion: &DiffusionSpec,
    payoffs: &PayoffTriple,
    strategies: (&RandomizedStrategy, &RandomizedStrategy),
    deviations: &[(String, RandomizedStrategy)],
    player: Player,
    x0: f64,
    params: &SimParams,
) -> Result<DeviationReport, SimError> {
    if deviations.is_empty() {
        return Err(SimError::InvalidParams("no deviations given".into()));
    }
    check_game(diffusion, strategies, x0, params)?;
    let eq = Game::new(diffusion, payoffs, strategies.0, strategies.1, params);
    let mut games = Vec::with_capacity(deviations.len());
    for (_, d) in deviations {
        if d.player != player {
            return Err(SimError::InvalidParams("deviation belongs to the other player".into()));
        }
        let pair = match player {
            Player::One => (d, strategies.1),
            Player::Two => (strategies.0, d),
        };
        check_game(diffusion, pair, x0, params)?;
        games.push(Game::new(diffusion, payoffs, pair.0, pair.1, params));
    }
    let sign = match player {
        Player::One => 1.0,
        Player::Two => -1.0,
    };
    let init = GainAcc {
        eq: (0.0, 0.0),
        diffs: vec![(0.0, 0.0); games.len()],
        n: 0,
    };
    let acc = chunked(
        params.n_paths,
        init,
        |i, acc| {
            let j0 = eq.play(x0, &mut PathRng::new(params.seed, i as u64), None).payoff;
            acc.n += 1;
            acc.eq.0 += j0;
            acc.eq.1 += j0 * j0;
            for (k, g) in games.iter().enumerate() {
                let j = g.play(x0, &mut PathRng::new(params.seed, i as u64), None).payoff;
                let d = sign * (j - j0);
                acc.diffs[k].0 += d;
                acc.diffs[k].1 += d * d;
            }
        },
        |mut a, b| {
            a.n += b.n;
            a.eq.0 += b.eq.0;
            a.eq.1 += b.eq.1;
            for (x, y) in a.diffs.iter_mut().zip(&b.diffs) {
                x.0 += y.0;
                x.1 += y.1;
            }
            a
        },
    );
    let (eq_mean, eq_se) = mean_se(acc.n, acc.eq.0, acc.eq.1);
    let gains: Vec<GainEstimate> = deviations
        .iter()
        .zip(&acc.diffs)
        .map(|((label, _), d)| {
            let (gain, std_error) = mean_se(acc.n, d.0, d.1);
            GainEstimate {
                label: label.clone(),
                gain,
                std_error,
            }
        })
        .collect();
    let argmax = (0..gains.len())
        .max_by(|&a, &b| gains[a].gain.total_cmp(&gains[b].gain))
        .unwrap_or(0);
    Ok(DeviationReport {
        player: player.index(),
        x0,
        equilibrium_estimate: eq_mean,
        equilibrium_std_error: eq_se,
        gains,
        argmax,
    })
}

/// Immediate stop, never stop, one-sided threshold stops at `x0 +- {0.25, 0.5, 1, 2}`
/// and the equilibrium strategy with its randomization halved.
pub fn deviation_family(equilibrium: &RandomizedStrategy, x0: f64) -> Vec<(String, RandomizedStrategy)> {
    let p = equilibrium.player;
    let mut out = vec![
        ("immediate".to_string(), RandomizedStrategy::always(p)),
        ("never".to_string(), RandomizedStrategy::never(p)),
    ];
    for d in [0.25, 0.5, 1.0, 2.0] {
        out.push((
            format!("stop at x >= {}", x0 + d),
            RandomizedStrategy::pure(p, PointSet::new(vec![(x0 + d, f64::INFINITY)], vec![])),
        ));
        out.push((
            format!("stop at x <= {}", x0 - d),
            RandomizedStrategy::pure(p, PointSet::new(vec![(f64::NEG_INFINITY, x0 - d)], vec![])),
        ));
    }
    out.push(("rate-halved".to_string(), equilibrium.scaled(0.5)));
    out
}

/// Monte Carlo estimate of `E_x` of the sum of the pathwise suprema of
/// `e^{-rt}|f(X_t)|`, `e^{-rt}|g(X_t)|` and `e^{-rt}|h(X_t)|`.
pub fn estimate_envelope(
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    xs: &[f64],
    dt: f64,
    t_max: f64,
    n_paths: usize,
    seed: u64,
) -> Vec<f64> {
    let stepper = Stepper::new(diffusion, dt);
    let steps = (t_max / dt).ceil() as usize;
    let disc_step = (-diffusion.r * dt).exp();
    let (lo, hi) = (diffusion.lo(), diffusion.hi());
    let n = diffusion.grid.len().max(TABLE_MIN);
    let tabs = [
        Table::build(lo, hi, n, |x| payoffs.f.eval(x).abs()),
        Table::build(lo, hi, n, |x| payoffs.g.eval(x).abs()),
        Table::build(lo, hi, n, |x| payoffs.h.eval(x).abs()),
    ];
    xs.iter()
        .enumerate()
        .map(|(j, &x0)| {
            let sums: Vec<f64> = (0..n_paths.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut s = 0.0;
                    for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                        let mut rng = PathRng::new(seed ^ ((j as u64) << 40), i as u64);
                        let mut x = x0;
                        let mut disc = 1.0;
                        let mut m = [0.0f64; 3];
                        for (k, t) in tabs.iter().enumerate() {
                            m[k] = t.eval(x);
                        }
                        for _ in 0..steps {
                            x = stepper.step(x, rng.normal());
                            disc *= disc_step;
                            for (k, t) in tabs.iter().enumerate() {
                                m[k] = m[k].max(disc * t.eval(x));
                            }
                        }
                        s += m[0] + m[1] + m[2];
                    }
                    s
                })
                .collect();
            sums.iter().sum::<f64>() / n_paths as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{uniform_grid, PiecewiseFn};

    fn wiener() -> DiffusionSpec {
        DiffusionSpec::wiener(0.1, uniform_grid(-5.0, 5.0, 1001)).unwrap()
    }

    fn payoffs() -> PayoffTriple {
        PayoffTriple::new(
            PiecewiseFn::smooth(Expr::x()),
            PiecewiseFn::smooth(Expr::x() + 1.0),
            PiecewiseFn::smooth(Expr::c(7.0)),
        )
    }

    #[test]
    fn immediate_stop_pays_f_or_h() {
        let d = wiener();
        let p = payoffs();
        let params = SimParams::new(1e-3, 10.0, 50, 1);
        let s1 = RandomizedStrategy::always(Player::One);
        let rep = run_game(&d, &p, (&s1, &RandomizedStrategy::never(Player::Two)), 0.5, &params).unwrap();
        assert_eq!(rep.estimate, 0.5);
        assert_eq!(rep.counts.p1_first, 50);
        let rep = run_game(&d, &p, (&s1, &RandomizedStrategy::always(Player::Two)), 0.5, &params).unwrap();
        assert_eq!(rep.estimate, 7.0);
        assert_eq!(rep.counts.simultaneous, 50);
    }

    #[test]
    fn degenerate_paths_are_constant() {
        let d = DiffusionSpec::new_unvalidated(Expr::c(0.0), Expr::c(0.0), 0.1, -1.0, 1.0, uniform_grid(-1.0, 1.0, 11));
        let b = simulate_paths(&d, 0.3, SimParams::new(0.01, 1.0, 4, 9)).unwrap();
        assert!(b.path(2).iter().all(|&x| x == 0.3));
    }

    #[test]
    fn band_scales_with_sigma_squared() {
        let path = [0.0, 0.001, -0.002, 0.5];
        let params = SimParams {
            band_halfwidth: Some(0.01),
            ..SimParams::new(1e-4, 1.0, 1, 0)
        };
        let d1 = wiener();
        let d2 = DiffusionSpec::new(Expr::c(0.0), Expr::c(2.0), 0.1, f64::NEG_INFINITY, f64::INFINITY, d1.grid.clone())
            .unwrap();
        let l1 = approx_local_time(&path, 0.0, &d1, &params);
        let l2 = approx_local_time(&path, 0.0, &d2, &params);
        assert_eq!(l1.len(), 3);
        for (a, b) in l1.iter().zip(&l2) {
            assert!((b - 4.0 * a).abs() < 1e-15);
        }
        assert!(approx_local_time(&[3.0, 3.1], 0.0, &d1, &params).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn undiscounted_censoring_is_refused() {
        let d = DiffusionSpec::wiener(0.0, uniform_grid(-5.0, 5.0, 101)).unwrap();
        let never = (RandomizedStrategy::never(Player::One), RandomizedStrategy::never(Player::Two));
        let err = run_game(&d, &payoffs(), (&never.0, &never.1), 0.0, &SimParams::new(0.01, 1.0, 1, 0));
        assert_eq!(err.unwrap_err(), SimError::UndiscountedCensoring);
    }

    #[test]
    fn table_interpolates_linearly() {
        let t = Table::build(0.0, 1.0, 11, |x| 3.0 * x + 1.0);
        for x in [0.0, 0.05, 0.5, 0.93, 1.0] {
            assert!((t.eval(x) - (3.0 * x + 1.0)).abs() < 1e-12);
        }
    }
}
