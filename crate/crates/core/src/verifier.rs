//! Best responses against fixed strategies and the pure-equilibrium tests.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Result, SolverError, StrategyError};
use crate::model::{region_boundaries, DiffusionSpec, PayoffTriple, Region, RegionPartition};
use crate::sets::PointSet;
use crate::solver::{interpolate, payoff_scale, solve_obstacle, ObstacleProblem, ValueSolution, DEFAULT_MAX_ITER};
use crate::strategy::{build_nash_strategies, check_simplified_condition, pure_stop_sets, Player, RandomizedStrategy};

/// Relative accuracy of the inner obstacle solves.
const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseSolution {
    pub player: Player,
    pub grid: Vec<f64>,
    /// Optimal value of the responder (player 1 maximizes, player 2 minimizes).
    pub w: Vec<f64>,
    pub response_stop_mask: Vec<bool>,
    /// Improvement over the game value, signed so positive means a profitable deviation.
    pub gain: Vec<f64>,
    /// Largest change of `gain` between grid spacings `dx` and `2 dx`.
    pub allowance: f64,
}

impl BestResponseSolution {
    pub fn max_gain(&self) -> f64 {
        self.gain.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> f64 {
        let i = (0..self.gain.len())
            .max_by(|&a, &b| self.gain[a].total_cmp(&self.gain[b]))
            .unwrap_or(0);
        self.grid[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NonexistenceCondition {
    /// Sup of f over a component of B4 ∪ B5 exceeds f ∨ g.
    #[serde(rename = "i")]
    SupAboveMax,
    /// Inf of g over a component of B3 ∪ B6 falls below f ∧ g.
    #[serde(rename = "ii")]
    InfBelowMin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureNeVerdict {
    pub sufficient_holds: bool,
    pub nonexistence_holds: bool,
    pub witness_x: Option<f64>,
    pub condition: Option<NonexistenceCondition>,
    /// Size of the violation at the witness.
    pub margin: f64,
    pub inconclusive: bool,
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let i = grid.partition_point(|g| *g < x).min(grid.len() - 1);
    if i > 0 && (x - grid[i - 1]).abs() <= (grid[i] - x).abs() {
        i - 1
    } else {
        i
    }
}

fn stop_nodes(grid: &[f64], set: &PointSet) -> Vec<bool> {
    let mut m: Vec<bool> = grid.iter().map(|&x| set.contains(x)).collect();
    for &p in &set.points {
        if p >= grid[0] && p <= grid[grid.len() - 1] {
            m[nearest(grid, p)] = true;
        }
    }
    m
}

/// Opponent clock as a killing rate per node: the Lebesgue rate plus atoms
/// spread as `Gamma sigma^2 / dx` on the node nearest to each atom.
fn opponent_killing(grid: &[f64], opponent: &RandomizedStrategy, diffusion: &DiffusionSpec) -> Vec<f64> {
    let n = grid.len();
    let mut k: Vec<f64> = grid.iter().map(|&x| opponent.rate_at(x)).collect();
    for a in &opponent.atoms {
        if a.x <= grid[0] || a.x >= grid[n - 1] {
            continue;
        }
        let i = nearest(grid, a.x);
        if i == 0 || i == n - 1 {
            continue;
        }
        let s = diffusion.sigma_at(a.x);
        k[i] += a.gamma * s * s / (0.5 * (grid[i + 1] - grid[i - 1]));
    }
    k
}

fn respond_on(
    grid: &[f64],
    opponent: &RandomizedStrategy,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    player: Player,
) -> Result<(Vec<f64>, Vec<bool>), SolverError> {
    let n = grid.len();
    let fv: Vec<f64> = grid.iter().map(|&x| payoffs.f.eval(x)).collect();
    let gv: Vec<f64> = grid.iter().map(|&x| payoffs.g.eval(x)).collect();
    let hv: Vec<f64> = grid.iter().map(|&x| payoffs.h.eval(x)).collect();
    let pinned = stop_nodes(grid, &opponent.stop_set);
    let killing = opponent_killing(grid, opponent, diffusion);
    let (own, other) = match player {
        Player::One => (&fv, &gv),
        Player::Two => (&gv, &fv),
    };
    let pin = |i: usize| match player {
        Player::One => gv[i].max(hv[i]),
        Player::Two => fv[i].min(hv[i]),
    };
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    for i in 0..n {
        if pinned[i] {
            lower[i] = pin(i);
            upper[i] = pin(i);
        } else if player == Player::One {
            lower[i] = own[i];
        } else {
            upper[i] = own[i];
        }
    }
    let end = |i: usize| if pinned[i] { pin(i) } else { own[i] };
    let mut prob = ObstacleProblem::new(grid.to_vec(), lower, upper, (end(0), end(n - 1)));
    prob.source = (0..n).map(|i| killing[i] * other[i]).collect();
    prob.killing = killing;
    let scale = payoff_scale(&fv, &gv);
    let out = solve_obstacle(&prob, diffusion, SOLVE_TOL * scale, DEFAULT_MAX_ITER)?;
    let tol = 1e-7 * scale;
    let stop = (0..n).map(|i| !pinned[i] && (out.v[i] - own[i]).abs() <= tol).collect();
    Ok((out.v, stop))
}

/// Optimal response of `player` to `opponent`, compared with the game value
/// `value`. Solved on the value grid and on every other node of it; the gap
/// between the two gains is reported as `allowance`.
pub fn best_response_value(
    opponent: &RandomizedStrategy,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    player: Player,
    value: &ValueSolution,
) -> Result<BestResponseSolution> {
    if opponent.player != player.opponent() {
        return Err(StrategyError::Invalid("opponent strategy belongs to the responding player".into()).into());
    }
    opponent.validate(&value.grid)?;
    let grid = &value.grid;
    let sign = match player {
        Player::One => 1.0,
        Player::Two => -1.0,
    };
    let (w, stop) = respond_on(grid, opponent, payoffs, diffusion, player)?;
    let gain: Vec<f64> = (0..grid.len()).map(|i| sign * (w[i] - value.v[i])).collect();

    let coarse: Vec<f64> = grid.iter().step_by(2).copied().collect();
    let allowance = if coarse.len() >= 3 && coarse.last() == grid.last() {
        let (wc, _) = respond_on(&coarse, opponent, payoffs, diffusion, player)?;
        coarse
            .iter()
            .zip(&wc)
            .map(|(&x, &wx)| {
                let gc = sign * (wx - interpolate(&value.grid, &value.v, x));
                let gf = sign * (interpolate(grid, &w, x) - interpolate(&value.grid, &value.v, x));
                (gf - gc).abs()
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(BestResponseSolution {
        player,
        grid: grid.clone(),
        w,
        response_stop_mask: stop,
        gain,
        allowance,
    })
}

/// Both stop sets avoid the regions where the stopping player would rather
/// randomize.
pub fn check_pure_ne_sufficient(sol: &ValueSolution, partition: &RegionPartition) -> bool {
    (0..sol.grid.len()).all(|i| {
        !(sol.d1_mask[i] && partition.is_in(i, &[Region::B3, Region::B6]))
            && !(sol.d2_mask[i] && partition.is_in(i, &[Region::B4, Region::B5]))
    })
}

/// Maximal runs of `mask` as index pairs.
fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let s = i;
            while i + 1 < mask.len() && mask[i + 1] {
                i += 1;
            }
            out.push((s, i));
        }
        i += 1;
    }
    out
}

/// Single obstacle problem on one component with the strict-exit convention:
/// the endpoints carry the limit of the obstacle payoff, not the obstacle.
fn component_value(
    partition: &RegionPartition,
    cuts: &[f64],
    (s, e): (usize, usize),
    w: &dyn Fn(f64) -> f64,
    diffusion: &DiffusionSpec,
    sup: bool,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let grid = &partition.grid;
    let n = grid.len();
    let snap = |i: usize, j: usize| {
        cuts.iter()
            .copied()
            .find(|&c| c > grid[i.min(j)] - 1e-12 && c < grid[i.max(j)] + 1e-12)
    };
    let mut sub: Vec<f64> = Vec::with_capacity(e - s + 3);
    if s > 0 {
        sub.push(snap(s - 1, s).filter(|&c| c < grid[s]).unwrap_or(grid[s - 1]));
    }
    sub.extend_from_slice(&grid[s..=e]);
    if e + 1 < n {
        sub.push(snap(e, e + 1).filter(|&c| c > grid[e]).unwrap_or(grid[e + 1]));
    }
    if sub.len() < 3 {
        return Ok((sub.clone(), sub.iter().map(|&x| w(x)).collect()));
    }
    let m = sub.len();
    let obs: Vec<f64> = sub.iter().map(|&x| w(x)).collect();
    let (lower, upper) = if sup {
        (obs.clone(), vec![f64::INFINITY; m])
    } else {
        (vec![f64::NEG_INFINITY; m], obs.clone())
    };
    let prob = ObstacleProblem::new(sub.clone(), lower, upper, (obs[0], obs[m - 1]));
    let scale = payoff_scale(&obs, &obs);
    let out = solve_obstacle(&prob, diffusion, SOLVE_TOL * scale, DEFAULT_MAX_ITER)?;
    Ok((sub, out.v))
}

/// Non-existence test: (i) on components of B4 ∪ B5 the stopping problem for
/// f up to the exit time beats f ∨ g somewhere, or (ii) on components of
/// B3 ∪ B6 the one for g undercuts f ∧ g.
pub fn check_pure_ne_nonexistence(
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    partition: &RegionPartition,
    tol: f64,
) -> Result<PureNeVerdict> {
    let cuts: Vec<f64> = region_boundaries(payoffs, partition)?.iter().map(|b| b.x).collect();
    let f = |x: f64| payoffs.f.eval(x);
    let g = |x: f64| payoffs.g.eval(x);
    let mut best: Option<(f64, f64, NonexistenceCondition)> = None;
    let mut consider = |x: f64, margin: f64, c: NonexistenceCondition| {
        if margin > tol && best.map_or(true, |b| margin > b.1) {
            best = Some((x, margin, c));
        }
    };
    for comp in runs(&partition.mask(&[Region::B4, Region::B5])) {
        let (sub, v) = component_value(partition, &cuts, comp, &f, diffusion, true)?;
        for i in 1..sub.len() - 1 {
            let x = sub[i];
            consider(x, v[i] - f(x).max(g(x)), NonexistenceCondition::SupAboveMax);
        }
    }
    for comp in runs(&partition.mask(&[Region::B3, Region::B6])) {
        let (sub, v) = component_value(partition, &cuts, comp, &g, diffusion, false)?;
        for i in 1..sub.len() - 1 {
            let x = sub[i];
            consider(x, f(x).min(g(x)) - v[i], NonexistenceCondition::InfBelowMin);
        }
    }
    Ok(PureNeVerdict {
        sufficient_holds: false,
        nonexistence_holds: best.is_some(),
        witness_x: best.map(|b| b.0),
        condition: best.map(|b| b.2),
        margin: best.map_or(0.0, |b| b.1),
        inconclusive: best.is_none(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub verdict: PureNeVerdict,
    /// Which strategies the best-response gains were computed against.
    pub reference: Option<&'static str>,
    pub best_responses: Vec<BestResponseSolution>,
}

impl VerificationReport {
    fn gain(&self, p: Player) -> Option<f64> {
        self.best_responses.iter().find(|b| b.player == p).map(|b| b.max_gain())
    }

    pub fn to_json(&self) -> Value {
        let v = &self.verdict;
        json!({
            "sufficient": v.sufficient_holds,
            "nonexistence": v.nonexistence_holds,
            "inconclusive": v.inconclusive,
            "witness_x": v.witness_x,
            "condition": v.condition,
            "margin": v.margin,
            "max_gain_p1": self.gain(Player::One),
            "max_gain_p2": self.gain(Player::Two),
            "gain_allowance": self.best_responses.iter().map(|b| b.allowance).fold(0.0, f64::max),
            "reference": self.reference,
        })
    }
}

/// Runs both pure-equilibrium tests and, when an equilibrium is known (the
/// pure stop sets, else the explicit randomized pair), the best responses to it.
pub fn verify(
    sol: &ValueSolution,
    partition: &RegionPartition,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
    tol: f64,
) -> Result<VerificationReport> {
    let sufficient = check_pure_ne_sufficient(sol, partition);
    let mut verdict = if sufficient {
        PureNeVerdict {
            sufficient_holds: true,
            nonexistence_holds: false,
            witness_x: None,
            condition: None,
            margin: 0.0,
            inconclusive: false,
        }
    } else {
        check_pure_ne_nonexistence(payoffs, diffusion, partition, tol)?
    };
    verdict.sufficient_holds = sufficient;

    let pair = if sufficient {
        let (s1, s2) = pure_stop_sets(sol, partition, payoffs)?;
        Some(("pure", RandomizedStrategy::pure(Player::One, s1), RandomizedStrategy::pure(Player::Two, s2)))
    } else if check_simplified_condition(partition) {
        let (a, b) = build_nash_strategies(sol, partition, payoffs, diffusion)?;
        Some(("nash", a, b))
    } else {
        None
    };
    let (reference, best_responses) = match pair {
        Some((label, s1, s2)) => (
            Some(label),
            vec![
                best_response_value(&s2, payoffs, diffusion, Player::One, sol)?,
                best_response_value(&s1, payoffs, diffusion, Player::Two, sol)?,
            ],
        ),
        None => (None, Vec::new()),
    };
    Ok(VerificationReport {
        verdict,
        reference,
        best_responses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_split_mask() {
        assert_eq!(runs(&[false, true, true, false, true]), vec![(1, 2), (4, 4)]);
        assert!(runs(&[false, false]).is_empty());
    }

    #[test]
    fn nearest_node_ties_go_left() {
        let g = [0.0, 1.0, 2.0];
        assert_eq!(nearest(&g, 0.5), 0);
        assert_eq!(nearest(&g, 1.6), 2);
        assert_eq!(nearest(&g, 9.0), 2);
    }
}
