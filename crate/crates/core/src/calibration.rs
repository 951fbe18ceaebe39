//! Epsilon-equilibrium intensities for general payoffs. Each randomization
//! component gets one constant rate and each isolated point one local-time
//! coefficient, doubled until the escape probability times the envelope gap
//! is at most epsilon / 4.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::StrategyError;
use crate::fd::{solve_tridiagonal, Stencil};
use crate::model::{region_boundaries, uniform_grid, DiffusionSpec, PayoffTriple, RegionPartition};
use crate::sets::PointSet;
use crate::sim::{default_horizon, estimate_envelope, PathRng, Stepper};
use crate::solver::ValueSolution;
use crate::strategy::{
    build_nash_strategies, check_simplified_condition, exit_interval, mask_to_set, pure_stop_sets, Atom, Player,
    RandomizedStrategy, RateFn,
};

pub const RATE_CAP: f64 = 1e9;
const LOCAL_NODES: usize = 100;
const TIME_STEPS: usize = 200;
const SAMPLES_PER_COMPONENT: usize = 33;
const ENVELOPE_NODES: usize = 33;

/// `d(x)` for a lower-side bound on `value`: `eps/4` if `value + eps/4 >= 0`, else `eps/8`.
pub fn d_of_x(value: f64, eps: f64) -> f64 {
    if value + eps / 4.0 >= 0.0 {
        eps / 4.0
    } else {
        eps / 8.0
    }
}

/// `k(x)` matching [`d_of_x`]; infinite on the `eps/4` branch and whenever `r = 0`.
pub fn k_of_x(value: f64, eps: f64, r: f64) -> f64 {
    if value + eps / 4.0 >= 0.0 || r <= 0.0 {
        f64::INFINITY
    } else {
        ((value + eps / 8.0) / (value + eps / 4.0)).ln() / r
    }
}

/// Upper-side `d_2(x)`: `eps/4` if `value - eps/4 <= 0`, else `eps/8`.
pub fn d_upper(value: f64, eps: f64) -> f64 {
    if value - eps / 4.0 <= 0.0 {
        eps / 4.0
    } else {
        eps / 8.0
    }
}

pub fn k_upper(value: f64, eps: f64, r: f64) -> f64 {
    if value - eps / 4.0 <= 0.0 || r <= 0.0 {
        f64::INFINITY
    } else {
        ((value - eps / 8.0) / (value - eps / 4.0)).ln() / r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationCase {
    /// Both players' stop sets contain the point.
    Joint,
    /// Only the randomizing player's stop set contains the point.
    OwnOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub d: f64,
    pub k: f64,
    pub interval: (f64, f64),
    /// Clock also capped at half the first hitting time of the opponent's stop set.
    pub half_hitting_horizon: bool,
    pub probability: f64,
    pub gap: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub player: u8,
    pub x: f64,
    pub case: CalibrationCase,
    pub atom: bool,
    pub coefficient: f64,
    pub target: f64,
    pub checks: Vec<ConditionCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRate {
    pub player: u8,
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCalibration {
    pub epsilon: f64,
    pub rates: Vec<ComponentRate>,
    pub atoms: Vec<(u8, Atom)>,
    /// Envelope estimates `(x, M(x))` with the safety factor applied.
    pub envelope: Vec<(f64, f64)>,
    pub points: Vec<CalibrationPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub envelope_paths: usize,
    pub envelope_dt: f64,
    pub envelope_safety: f64,
    pub mc_paths: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            envelope_paths: 10_000,
            envelope_dt: 0.05,
            envelope_safety: 1.2,
            mc_paths: 2000,
            seed: 0x5eed,
        }
    }
}

/// Envelope `M` on a coarse set of nodes; `max_on` bounds it over an interval.
#[derive(Debug, Clone)]
pub struct Envelope {
    nodes: Vec<f64>,
    vals: Vec<f64>,
}

impl Envelope {
    pub fn estimate(payoffs: &PayoffTriple, diffusion: &DiffusionSpec, opts: &CalibrationOptions) -> Envelope {
        let nodes = uniform_grid(diffusion.lo(), diffusion.hi(), ENVELOPE_NODES);
        let vals = if diffusion.r <= 0.0 {
            // the reflected path eventually visits every point of the domain
            let g = &diffusion.grid;
            let m = |w: &dyn Fn(f64) -> f64| g.iter().fold(0.0f64, |a, &x| a.max(w(x).abs()));
            let total = m(&|x| payoffs.f.eval(x)) + m(&|x| payoffs.g.eval(x)) + m(&|x| payoffs.h.eval(x));
            vec![total; nodes.len()]
        } else {
            let t_max = default_horizon(payoffs, diffusion);
            estimate_envelope(payoffs, diffusion, &nodes, opts.envelope_dt, t_max, opts.envelope_paths, opts.seed)
                .into_iter()
                .map(|m| m * opts.envelope_safety)
                .collect()
        };
        Envelope { nodes, vals }
    }

    pub fn max_on(&self, a: f64, b: f64) -> f64 {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|v| *v <= a).saturating_sub(1);
        let j = self.nodes.partition_point(|v| *v < b).min(n - 1);
        self.vals[i..=j].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().copied().zip(self.vals.iter().copied()).collect()
    }
}

/// Player-2 view of the payoffs; Player 1 is handled by the substitution
/// g -> -f, f -> -g with the stop sets and regions swapped.
struct View<'a> {
    player: Player,
    payoffs: &'a PayoffTriple,
    /// Own stop set intersected with the regions where this player randomizes.
    rand: &'a [bool],
    other: &'a [bool],
    other_set: PointSet,
}

impl View<'_> {
    fn big_f(&self, x: f64) -> f64 {
        match self.player {
            Player::Two => self.payoffs.f.eval(x),
            Player::One => -self.payoffs.g.eval(x),
        }
    }

    fn big_g(&self, x: f64) -> f64 {
        match self.player {
            Player::Two => self.payoffs.g.eval(x),
            Player::One => -self.payoffs.f.eval(x),
        }
    }
}

/// Where the clock runs: a constant-rate interval or a local-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Interval(f64, f64),
    Point(f64),
}

struct Condition {
    check: ConditionCheck,
    /// Occupation (or local time) at the horizon, per Monte Carlo path.
    mc: Option<Vec<f64>>,
}

struct Ctx<'a> {
    diffusion: &'a DiffusionSpec,
    payoffs: &'a PayoffTriple,
    envelope: &'a Envelope,
    eps: f64,
    opts: CalibrationOptions,
}

fn local_grid(a: f64, x: f64, b: f64) -> Vec<f64> {
    let mut g = uniform_grid(a, x, LOCAL_NODES + 1);
    g.pop();
    g.extend(uniform_grid(x, b, LOCAL_NODES + 1));
    g
}

fn killing(grid: &[f64], support: Support, c: f64, diffusion: &DiffusionSpec) -> Vec<f64> {
    let n = grid.len();
    let mut k = vec![0.0; n];
    match support {
        Support::Interval(a, b) => {
            for i in 0..n {
                if grid[i] >= a && grid[i] <= b {
                    k[i] = c;
                }
            }
        }
        Support::Point(y) => {
            let i = grid
                .iter()
                .enumerate()
                .min_by(|p, q| (p.1 - y).abs().total_cmp(&(q.1 - y).abs()))
                .map(|p| p.0)
                .unwrap_or(0);
            if i > 0 && i + 1 < n {
                let s = diffusion.sigma_at(y);
                k[i] = c * s * s / (0.5 * (grid[i + 1] - grid[i - 1]));
            }
        }
    }
    k
}

/// `P_x(clock survives until tau_exit ∧ k)` for clock intensity `c` on
/// `support`: an elliptic solve when `k` is infinite, implicit time stepping
/// over `[0, k]` otherwise. Local time is the semimartingale one, entering as
/// killing `c sigma^2 / dx` at the node of the point.
pub fn survival_probability(
    diffusion: &DiffusionSpec,
    x: f64,
    interval: (f64, f64),
    k: f64,
    support: Support,
    c: f64,
) -> f64 {
    let grid = local_grid(interval.0, x, interval.1);
    let n = grid.len();
    let local = DiffusionSpec::new_unvalidated(
        diffusion.mu.clone(),
        diffusion.sigma.clone(),
        0.0,
        diffusion.alpha,
        diffusion.beta,
        grid.clone(),
    );
    let kill = killing(&grid, support, c, diffusion);
    let st = Stencil::generator(&grid, &local, Some(&kill));
    let ix = LOCAL_NODES;
    let mut a = vec![0.0; n];
    let mut b = vec![1.0; n];
    let mut cc = vec![0.0; n];
    if k.is_finite() {
        let ds = k / TIME_STEPS as f64;
        for i in 1..n - 1 {
            a[i] = -ds * st.lo[i];
            b[i] = 1.0 - ds * st.di[i];
            cc[i] = -ds * st.up[i];
        }
        let mut u = vec![1.0; n];
        for _ in 0..TIME_STEPS {
            u = solve_tridiagonal(&a, &b, &cc, &u);
            u[0] = 1.0;
            u[n - 1] = 1.0;
        }
        u[ix]
    } else {
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            a[i] = st.lo[i];
            b[i] = st.di[i];
            cc[i] = st.up[i];
        }
        d[0] = 1.0;
        d[n - 1] = 1.0;
        solve_tridiagonal(&a, &b, &cc, &d)[ix]
    }
}

/// Per-path clock exposure up to `tau_exit ∧ k ∧ H/2`, `H` the first hitting
/// time of `target`.
fn exposure_samples(
    ctx: &Ctx,
    x: f64,
    interval: (f64, f64),
    k: f64,
    support: Support,
    target: &PointSet,
    salt: u64,
) -> Vec<f64> {
    let w = (interval.1 - interval.0).max(1e-12);
    let smax = ctx.diffusion.sigma_at(x).abs().max(1e-12);
    let dt = (w / (40.0 * smax)).powi(2);
    let stepper = Stepper::new(ctx.diffusion, dt);
    let band = match support {
        Support::Point(y) => {
            let h = 2.0 * dt.sqrt() * ctx.diffusion.sigma_at(y);
            Some((y, h, ctx.diffusion.sigma_at(y).powi(2) / (2.0 * h) * dt))
        }
        Support::Interval(..) => None,
    };
    let max_steps = 1_000_000usize;
    (0..ctx.opts.mc_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::new(ctx.opts.seed ^ salt, i as u64);
            let mut occ = vec![0.0f64];
            let mut y = x;
            let mut hit = f64::INFINITY;
            let mut stop = f64::INFINITY;
            for s in 0..max_steps {
                let t = s as f64 * dt;
                if t >= k {
                    stop = k;
                    break;
                }
                let inc = match (support, band) {
                    (Support::Interval(a, b), _) => {
                        if y >= a && y <= b {
                            dt
                        } else {
                            0.0
                        }
                    }
                    (Support::Point(_), Some((p, h, u))) => {
                        if (y - p).abs() < h {
                            u
                        } else {
                            0.0
                        }
                    }
                    _ => 0.0,
                };
                let z = stepper.step(y, rng.normal());
                occ.push(occ[s] + inc);
                if target.first_hit(y, z).is_some() {
                    hit = t + dt;
                    stop = t + dt;
                    break;
                }
                if z <= interval.0 || z >= interval.1 {
                    stop = t + dt;
                    break;
                }
                y = z;
            }
            let horizon = stop.min(0.5 * hit).min(k);
            let idx = ((horizon / dt).floor() as usize).min(occ.len() - 1);
            occ[idx]
        })
        .collect()
}

impl Ctx<'_> {
    fn condition(
        &self,
        x: f64,
        d: f64,
        k: f64,
        gap: f64,
        half_hit: Option<&PointSet>,
        support: Support,
        salt: u64,
    ) -> Result<Condition, StrategyError> {
        let interval = exit_interval(x, d, self.payoffs, self.diffusion)?;
        let mc = match half_hit {
            Some(target) if !target.is_empty() => {
                Some(exposure_samples(self, x, interval, k, support, target, salt))
            }
            _ => None,
        };
        Ok(Condition {
            check: ConditionCheck {
                d,
                k,
                interval,
                half_hitting_horizon: half_hit.is_some(),
                probability: f64::NAN,
                gap,
                product: f64::NAN,
            },
            mc,
        })
    }

    fn probability(&self, x: f64, cond: &Condition, support: Support, c: f64) -> f64 {
        match &cond.mc {
            Some(exp) => exp.iter().map(|e| (-c * e).exp()).sum::<f64>() / exp.len() as f64,
            None => survival_probability(self.diffusion, x, cond.check.interval, cond.check.k, support, c),
        }
    }
}

/// Conditions at `x` for one player, per the case of the point.
fn conditions_at(
    ctx: &Ctx,
    view: &View,
    x: f64,
    case: CalibrationCase,
    support: Support,
    salt: u64,
) -> Result<Vec<Condition>, StrategyError> {
    let eps = ctx.eps;
    let r = ctx.diffusion.r;
    let m = |d: f64| -> Result<f64, StrategyError> {
        let iv = exit_interval(x, d, ctx.payoffs, ctx.diffusion)?;
        Ok(ctx.envelope.max_on(iv.0, iv.1))
    };
    match case {
        CalibrationCase::Joint => {
            let fx = view.big_f(x);
            let d = d_of_x(fx, eps);
            let gap = m(d)? - fx - eps / 4.0;
            Ok(vec![ctx.condition(x, d, k_of_x(fx, eps, r), gap, None, support, salt)?])
        }
        CalibrationCase::OwnOnly => {
            let gx = view.big_g(x);
            let d1 = d_of_x(gx, eps);
            let gap1 = m(d1)? - gx - eps / 4.0;
            let d2 = d_upper(gx, eps);
            let gap2 = m(d2)? + gx - eps / 4.0;
            Ok(vec![
                ctx.condition(x, d1, k_of_x(gx, eps, r), gap1, None, support, salt)?,
                ctx.condition(
                    x,
                    d2,
                    k_upper(gx, eps, r),
                    gap2,
                    Some(&view.other_set),
                    support,
                    salt ^ 0x9e37_79b9,
                )?,
            ])
        }
    }
}

/// Smallest power of two (from 1, capped) meeting every condition of every
/// sample point.
fn doubling_search(
    ctx: &Ctx,
    samples: &[(f64, Vec<Condition>)],
    support: Support,
) -> Result<f64, StrategyError> {
    let target = ctx.eps / 4.0;
    let mut c = 1.0f64;
    loop {
        let mut worst: Option<(f64, f64)> = None;
        for (x, conds) in samples {
            for cond in conds {
                if cond.check.gap <= 0.0 {
                    continue;
                }
                let p = ctx.probability(*x, cond, support, c);
                let prod = p * cond.check.gap;
                if prod > target && worst.map_or(true, |w| prod > w.1) {
                    worst = Some((*x, prod));
                }
            }
        }
        match worst {
            None => return Ok(c),
            Some((x, product)) => {
                if c >= RATE_CAP {
                    return Err(StrategyError::CalibrationFailure { x, product, target });
                }
                c = (2.0 * c).min(RATE_CAP);
            }
        }
    }
}

fn finish(ctx: &Ctx, player: Player, samples: Vec<(f64, Vec<Condition>)>, cases: &[CalibrationCase], support: Support, c: f64) -> Vec<CalibrationPoint> {
    samples
        .into_iter()
        .zip(cases)
        .map(|((x, conds), case)| CalibrationPoint {
            player: player.index(),
            x,
            case: *case,
            atom: matches!(support, Support::Point(_)),
            coefficient: c,
            target: ctx.eps / 4.0,
            checks: conds
                .iter()
                .map(|cond| {
                    let p = ctx.probability(x, cond, support, c);
                    ConditionCheck {
                        probability: p,
                        product: p * cond.check.gap,
                        ..cond.check.clone()
                    }
                })
                .collect(),
        })
        .collect()
}

struct PlayerResult {
    rates: Vec<ComponentRate>,
    atoms: Vec<Atom>,
    points: Vec<CalibrationPoint>,
}

fn calibrate_player(ctx: &Ctx, view: &View, grid: &[f64], cuts: &[f64]) -> Result<PlayerResult, StrategyError> {
    let n = grid.len();
    let set = mask_to_set(grid, view.rand, cuts);
    let case_at = |i: usize| {
        if view.other[i] {
            CalibrationCase::Joint
        } else {
            CalibrationCase::OwnOnly
        }
    };
    let node = |x: f64| grid.partition_point(|g| *g < x).min(n - 1);
    let (lo, hi) = (grid[0], grid[n - 1]);

    enum Job {
        Rate(f64, f64),
        Atom(f64),
    }
    let mut jobs: Vec<Job> = set.intervals.iter().map(|&(a, b)| Job::Rate(a, b)).collect();
    jobs.extend(set.points.iter().map(|&p| Job::Atom(p)));

    let results: Vec<Result<(Option<ComponentRate>, Option<Atom>, Vec<CalibrationPoint>), StrategyError>> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, job)| {
            let salt = ((view.player.index() as u64) << 56) ^ ((j as u64) << 32);
            match *job {
                Job::Rate(a, b) => {
                    let (ca, cb) = (a.max(lo), b.min(hi));
                    let first = node(ca).max(1);
                    let last = grid.partition_point(|g| *g <= cb).saturating_sub(1).min(n - 2);
                    let idx: Vec<usize> = if last < first {
                        vec![]
                    } else if last - first + 1 <= SAMPLES_PER_COMPONENT {
                        (first..=last).collect()
                    } else {
                        let mut v: Vec<usize> = (0..SAMPLES_PER_COMPONENT)
                            .map(|s| first + s * (last - first) / (SAMPLES_PER_COMPONENT - 1))
                            .collect();
                        v.dedup();
                        v
                    };
                    let support = Support::Interval(a, b);
                    let mut samples = Vec::new();
                    let mut cases = Vec::new();
                    for (s, &i) in idx.iter().enumerate() {
                        let case = case_at(i);
                        let conds = conditions_at(ctx, view, grid[i], case, support, salt ^ s as u64)?;
                        samples.push((grid[i], conds));
                        cases.push(case);
                    }
                    let c = doubling_search(ctx, &samples, support)?;
                    let points = finish(ctx, view.player, samples, &cases, support, c);
                    Ok((
                        Some(ComponentRate {
                            player: view.player.index(),
                            lo: a,
                            hi: b,
                            rate: c,
                        }),
                        None,
                        points,
                    ))
                }
                Job::Atom(p) => {
                    let support = Support::Point(p);
                    let case = case_at(node(p));
                    let samples = vec![(p, conditions_at(ctx, view, p, case, support, salt)?)];
                    let c = doubling_search(ctx, &samples, support)?;
                    let points = finish(ctx, view.player, samples, &[case], support, c);
                    Ok((None, Some(Atom { x: p, gamma: c }), points))
                }
            }
        })
        .collect();
    let mut out = PlayerResult {
        rates: Vec::new(),
        atoms: Vec::new(),
        points: Vec::new(),
    };
    for r in results {
        let (rate, atom, points) = r?;
        out.rates.extend(rate);
        out.atoms.extend(atom);
        out.points.extend(points);
    }
    Ok(out)
}

fn merge_atoms(mut a: Vec<Atom>, b: &[Atom]) -> Vec<Atom> {
    for atom in b {
        match a.iter_mut().find(|c| (c.x - atom.x).abs() <= 1e-12 * (1.0 + atom.x.abs())) {
            Some(c) => c.gamma = c.gamma.max(atom.gamma),
            None => a.push(*atom),
        }
    }
    a.sort_by(|p, q| p.x.total_cmp(&q.x));
    a
}

/// Calibrates a local-time coefficient at a single point of `player`'s
/// randomization set, the clock running only at that point.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_isolated_point(
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    envelope: &Envelope,
    player: Player,
    x: f64,
    case: CalibrationCase,
    other_stop: &PointSet,
    epsilon: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationPoint, StrategyError> {
    let ctx = Ctx {
        diffusion,
        payoffs,
        envelope,
        eps: epsilon,
        opts: *opts,
    };
    let view = View {
        player,
        payoffs,
        rand: &[],
        other: &[],
        other_set: other_stop.clone(),
    };
    let support = Support::Point(x);
    let samples = vec![(x, conditions_at(&ctx, &view, x, case, support, 0)?)];
    let c = doubling_search(&ctx, &samples, support)?;
    Ok(finish(&ctx, player, samples, &[case], support, c).remove(0))
}

pub fn calibrate_epsilon_strategies(
    sol: &ValueSolution,
    partition: &RegionPartition,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    epsilon: f64,
) -> Result<(RandomizedStrategy, RandomizedStrategy, EpsilonCalibration), StrategyError> {
    calibrate_epsilon_strategies_with(sol, partition, payoffs, diffusion, epsilon, &CalibrationOptions::default())
}

pub fn calibrate_epsilon_strategies_with(
    sol: &ValueSolution,
    partition: &RegionPartition,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    epsilon: f64,
    opts: &CalibrationOptions,
) -> Result<(RandomizedStrategy, RandomizedStrategy, EpsilonCalibration), StrategyError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(StrategyError::Invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let grid = &sol.grid;
    let bounds = region_boundaries(payoffs, partition).map_err(|e| StrategyError::Invalid(e.to_string()))?;
    let mut cuts: Vec<f64> = bounds.iter().map(|b| b.x).collect();
    cuts.extend_from_slice(&sol.free_boundaries.d1);
    cuts.extend_from_slice(&sol.free_boundaries.d2);
    let (stop1, stop2) = pure_stop_sets(sol, partition, payoffs)?;

    let needs_work = |p: Player| {
        let own = match p {
            Player::One => &sol.d1_mask,
            Player::Two => &sol.d2_mask,
        };
        (0..grid.len()).any(|i| own[i] && partition.is_in(i, &p.randomization_regions()))
    };
    let envelope = if needs_work(Player::One) || needs_work(Player::Two) {
        Envelope::estimate(payoffs, diffusion, opts)
    } else {
        Envelope {
            nodes: vec![diffusion.lo(), diffusion.hi()],
            vals: vec![0.0, 0.0],
        }
    };
    let ctx = Ctx {
        diffusion,
        payoffs,
        envelope: &envelope,
        eps: epsilon,
        opts: *opts,
    };
    let d1_set = mask_to_set(grid, &sol.d1_mask, &sol.free_boundaries.d1);
    let d2_set = mask_to_set(grid, &sol.d2_mask, &sol.free_boundaries.d2);

    let run = |player: Player| -> Result<PlayerResult, StrategyError> {
        let (own, other, other_set) = match player {
            Player::One => (&sol.d1_mask, &sol.d2_mask, d2_set.clone()),
            Player::Two => (&sol.d2_mask, &sol.d1_mask, d1_set.clone()),
        };
        let regions = player.randomization_regions();
        let rand: Vec<bool> = (0..grid.len())
            .map(|i| own[i] && partition.is_in(i, &regions))
            .collect();
        let view = View {
            player,
            payoffs,
            rand: &rand,
            other,
            other_set,
        };
        calibrate_player(&ctx, &view, grid, &cuts)
    };
    let r1 = run(Player::One)?;
    let r2 = run(Player::Two)?;

    let nash = if check_simplified_condition(partition) {
        Some(build_nash_strategies(sol, partition, payoffs, diffusion)?)
    } else {
        None
    };
    let assemble = |player: Player, res: &PlayerResult, stop: PointSet| -> RandomizedStrategy {
        let consts = RateFn::Constants(res.rates.iter().map(|c| (c.lo, c.hi, c.rate)).collect());
        let base = if res.rates.is_empty() { RateFn::Zero } else { consts };
        let nash_s = nash.as_ref().map(|(a, b)| match player {
            Player::One => a,
            Player::Two => b,
        });
        let (rate, atoms) = match nash_s {
            Some(ns) => {
                let rate = match (&base, &ns.rate) {
                    (RateFn::Zero, r) => r.clone(),
                    (b, RateFn::Zero) => b.clone(),
                    (b, r) => RateFn::Max(Box::new(b.clone()), Box::new(r.clone())),
                };
                (rate, merge_atoms(ns.atoms.clone(), &res.atoms))
            }
            None => (base, merge_atoms(Vec::new(), &res.atoms)),
        };
        RandomizedStrategy {
            player,
            stop_set: stop,
            rate,
            atoms,
            epsilon: Some(epsilon),
        }
    };
    let s1 = assemble(Player::One, &r1, stop1);
    let s2 = assemble(Player::Two, &r2, stop2);
    let mut rates = r1.rates;
    rates.extend(r2.rates);
    let mut atoms: Vec<(u8, Atom)> = s1.atoms.iter().map(|a| (1, *a)).collect();
    atoms.extend(s2.atoms.iter().map(|a| (2, *a)));
    let mut points = r1.points;
    points.extend(r2.points);
    Ok((
        s1,
        s2,
        EpsilonCalibration {
            epsilon,
            rates,
            atoms,
            envelope: envelope.samples(),
            points,
        },
    ))
}
