//! Markovian randomized stopping strategies: pure stop set, Lebesgue rate and
//! local-time atoms, plus the explicit Nash construction for games whose
//! payoffs never put h strictly outside [f, g] on B^{f <= g}.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::StrategyError;
use crate::expr::Expr;
use crate::model::{
    classify_point, region_boundaries, DiffusionSpec, PayoffTriple, PiecewiseFn, Region, RegionBoundary,
    RegionPartition,
};
use crate::sets::PointSet;
use crate::solver::ValueSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn index(self) -> u8 {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Player> {
        match i {
            1 => Some(Player::One),
            2 => Some(Player::Two),
            _ => None,
        }
    }

    pub fn opponent(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    /// Regions where this player may randomize (h beyond the payoff it fears).
    pub fn randomization_regions(self) -> [Region; 2] {
        match self {
            Player::One => [Region::B3, Region::B6],
            Player::Two => [Region::B4, Region::B5],
        }
    }
}

/// Local-time push `gamma * dl^x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub gamma: f64,
}

/// Explicit rate `((L_X - r) w / (w - other))_+` on `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct NashRate {
    pub w: PiecewiseFn,
    pub other: PiecewiseFn,
    pub mu: Expr,
    pub sigma: Expr,
    pub r: f64,
    pub support: PointSet,
}

impl NashRate {
    pub fn eval(&self, x: f64) -> f64 {
        if !self.support.contains_interior(x) || self.w.is_kink(x) {
            return 0.0;
        }
        let s = self.sigma.eval(x);
        let lw = self.mu.eval(x) * self.w.first_derivative(x) + 0.5 * s * s * self.w.second_derivative(x)
            - self.r * self.w.eval(x);
        let den = self.w.eval(x) - self.other.eval(x);
        if den == 0.0 {
            return 0.0;
        }
        (lw / den).max(0.0)
    }
}

/// Lebesgue stopping rate as a function of the state.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFn {
    Zero,
    Nash(Box<NashRate>),
    /// Constant rate `c` on each closed interval `[a, b]`.
    Constants(Vec<(f64, f64, f64)>),
    Scaled(Box<RateFn>, f64),
    Max(Box<RateFn>, Box<RateFn>),
}

impl RateFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RateFn::Zero => 0.0,
            RateFn::Nash(n) => n.eval(x),
            RateFn::Constants(list) => list
                .iter()
                .filter(|(a, b, _)| *a <= x && x <= *b)
                .fold(0.0, |m, (_, _, c)| m.max(*c)),
            RateFn::Scaled(inner, c) => c * inner.eval(x),
            RateFn::Max(a, b) => a.eval(x).max(b.eval(x)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            RateFn::Zero => true,
            RateFn::Nash(_) => false,
            RateFn::Constants(list) => list.iter().all(|c| c.2 == 0.0),
            RateFn::Scaled(inner, c) => *c == 0.0 || inner.is_zero(),
            RateFn::Max(a, b) => a.is_zero() && b.is_zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedStrategy {
    pub player: Player,
    pub stop_set: PointSet,
    pub rate: RateFn,
    pub atoms: Vec<Atom>,
    /// `None` for an exact equilibrium strategy.
    pub epsilon: Option<f64>,
}

impl RandomizedStrategy {
    pub fn pure(player: Player, stop_set: PointSet) -> RandomizedStrategy {
        RandomizedStrategy {
            player,
            stop_set,
            rate: RateFn::Zero,
            atoms: Vec::new(),
            epsilon: None,
        }
    }

    pub fn never(player: Player) -> RandomizedStrategy {
        RandomizedStrategy::pure(player, PointSet::empty())
    }

    pub fn always(player: Player) -> RandomizedStrategy {
        RandomizedStrategy::pure(player, PointSet::everything())
    }

    /// Rate at x; zero on the pure stop set.
    pub fn rate_at(&self, x: f64) -> f64 {
        if self.stop_set.contains(x) {
            0.0
        } else {
            self.rate.eval(x)
        }
    }

    pub fn is_pure(&self) -> bool {
        self.rate.is_zero() && self.atoms.iter().all(|a| a.gamma == 0.0)
    }

    /// Multiplies rate and atom coefficients by `c`; the stop set is unchanged.
    pub fn scaled(&self, c: f64) -> RandomizedStrategy {
        RandomizedStrategy {
            rate: match &self.rate {
                RateFn::Zero => RateFn::Zero,
                r => RateFn::Scaled(Box::new(r.clone()), c),
            },
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: a.x,
                    gamma: a.gamma * c,
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self, samples: &[f64]) -> Result<(), StrategyError> {
        for a in &self.atoms {
            if !(a.gamma >= 0.0 && a.gamma.is_finite()) {
                return Err(StrategyError::Invalid(format!("atom at {} has coefficient {}", a.x, a.gamma)));
            }
            if self.stop_set.contains_interior(a.x) {
                return Err(StrategyError::Invalid(format!("atom at {} lies inside the stop set", a.x)));
            }
        }
        for w in self.atoms.windows(2) {
            if !(w[1].x > w[0].x) {
                return Err(StrategyError::Invalid("atoms must be sorted and separated".into()));
            }
        }
        for &x in samples {
            let l = self.rate_at(x);
            if !(l >= 0.0) {
                return Err(StrategyError::Invalid(format!("rate {l} at x = {x}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self, samples: &[f64]) -> Value {
        let end = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
        json!({
            "player": self.player.index(),
            "stop_intervals": self.stop_set.intervals.iter().map(|(a, b)| json!([end(*a), end(*b)])).collect::<Vec<_>>(),
            "stop_points": self.stop_set.points,
            "rate_samples": samples.iter().map(|&x| json!([x, self.rate_at(x)])).collect::<Vec<_>>(),
            "atoms": self.atoms.iter().map(|a| json!([a.x, a.gamma])).collect::<Vec<_>>(),
            "epsilon": self.epsilon,
        })
    }
}

/// True iff B5 and B6 are empty on the grid.
pub fn check_simplified_condition(partition: &RegionPartition) -> bool {
    partition.count(Region::B5) == 0 && partition.count(Region::B6) == 0
}

/// Grid-mask set whose flips are located either at a refined region boundary
/// or at a refined free boundary lying in the same cell.
/// Mask flips within this many cells of a cut snap to it; contact sets read
/// off a tolerance test spread past a smooth-fit boundary by a few cells.
const SNAP_CELLS: f64 = 8.0;

pub(crate) fn mask_to_set(grid: &[f64], mask: &[bool], cuts: &[f64]) -> PointSet {
    PointSet::from_mask(grid, mask, |i, j| {
        let (a, b) = (grid[i], grid[j]);
        let h = SNAP_CELLS * (b - a);
        cuts.iter()
            .copied()
            .filter(|&c| c >= a - h && c <= b + h)
            .min_by(|p, q| (p - 0.5 * (a + b)).abs().total_cmp(&(q - 0.5 * (a + b)).abs()))
    })
}

fn region_cuts(bounds: &[RegionBoundary]) -> Vec<f64> {
    bounds.iter().map(|b| b.x).collect()
}

/// The region set `regions` as intervals (open regions are stored closed;
/// the difference is a null set for the dynamics).
pub fn region_set(partition: &RegionPartition, bounds: &[RegionBoundary], regions: &[Region]) -> PointSet {
    mask_to_set(&partition.grid, &partition.mask(regions), &region_cuts(bounds))
}

/// Pure stop set `D_i* \ (randomization regions)`.
fn stop_set(
    sol: &ValueSolution,
    partition: &RegionPartition,
    bounds: &[RegionBoundary],
    player: Player,
) -> PointSet {
    let (d, fb) = match player {
        Player::One => (&sol.d1_mask, &sol.free_boundaries.d1),
        Player::Two => (&sol.d2_mask, &sol.free_boundaries.d2),
    };
    let rand = partition.mask(&player.randomization_regions());
    let mask: Vec<bool> = d.iter().zip(&rand).map(|(a, b)| *a && !*b).collect();
    let mut cuts = region_cuts(bounds);
    cuts.extend_from_slice(fb);
    mask_to_set(&sol.grid, &mask, &cuts)
}

/// Pure stop sets read off the solution and partition: `D_i*` minus the
/// regions where player i would randomize.
pub fn pure_stop_sets(
    sol: &ValueSolution,
    partition: &RegionPartition,
    payoffs: &PayoffTriple,
) -> Result<(PointSet, PointSet), StrategyError> {
    let bounds = region_boundaries(payoffs, partition).map_err(|e| StrategyError::Invalid(e.to_string()))?;
    Ok((
        stop_set(sol, partition, &bounds, Player::One),
        stop_set(sol, partition, &bounds, Player::Two),
    ))
}

/// The explicit equilibrium: Player 1 randomizes on B3 with the g-based rate
/// and pushes at kinks of g, Player 2 on B4 with the f-based rate and pushes
/// at kinks of f.
pub fn build_nash_strategies(
    sol: &ValueSolution,
    partition: &RegionPartition,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
) -> Result<(RandomizedStrategy, RandomizedStrategy), StrategyError> {
    if !check_simplified_condition(partition) {
        return Err(StrategyError::HypothesisViolated {
            points: partition.count(Region::B5) + partition.count(Region::B6),
        });
    }
    let bounds = region_boundaries(payoffs, partition).map_err(|e| StrategyError::Invalid(e.to_string()))?;
    let build = |player: Player| -> Result<RandomizedStrategy, StrategyError> {
        let (w, other, region) = match player {
            Player::One => (&payoffs.g, &payoffs.f, Region::B3),
            Player::Two => (&payoffs.f, &payoffs.g, Region::B4),
        };
        let support = region_set(partition, &bounds, &[region]);
        let (lo, hi) = (diffusion.lo(), diffusion.hi());
        let mut atoms = Vec::new();
        for k in w.kinks() {
            if k.x <= lo || k.x >= hi {
                continue;
            }
            let c = classify_point(payoffs, k.x, partition.eq_tol).map_err(|e| StrategyError::Invalid(e.to_string()))?;
            if c.region != region {
                continue;
            }
            let gap = w.eval(k.x) - other.eval(k.x);
            let gamma = (0.5 * k.jump() / gap).max(0.0);
            if gamma > 0.0 {
                atoms.push(Atom { x: k.x, gamma });
            }
        }
        let rate = if support.is_empty() {
            RateFn::Zero
        } else {
            RateFn::Nash(Box::new(NashRate {
                w: w.clone(),
                other: other.clone(),
                mu: diffusion.mu.clone(),
                sigma: diffusion.sigma.clone(),
                r: diffusion.r,
                support,
            }))
        };
        Ok(RandomizedStrategy {
            player,
            stop_set: stop_set(sol, partition, &bounds, player),
            rate,
            atoms,
            epsilon: None,
        })
    };
    Ok((build(Player::One)?, build(Player::Two)?))
}

/// Largest interval around `x` on which f and g stay within `d` of their
/// values at `x`, clipped to the computational domain.
pub fn exit_interval(
    x: f64,
    d: f64,
    payoffs: &PayoffTriple,
    diffusion: &DiffusionSpec,
) -> Result<(f64, f64), StrategyError> {
    let (lo, hi) = (diffusion.lo(), diffusion.hi());
    if !(x > lo && x < hi) || !(d > 0.0) {
        return Err(StrategyError::DegenerateInterval(x));
    }
    let (f0, g0) = (payoffs.f.eval(x), payoffs.g.eval(x));
    let ok = |y: f64| (payoffs.f.eval(y) - f0).abs() <= d && (payoffs.g.eval(y) - g0).abs() <= d;
    let span = hi - lo;
    let reach = |dir: f64, end: f64| -> f64 {
        let mut last = x;
        loop {
            let slope = payoffs.f.first_derivative(last).abs() + payoffs.g.first_derivative(last).abs();
            let step = (0.25 * d / (slope + 1e-300)).min(span / 4096.0).max(1e-12 * (1.0 + x.abs()));
            let next = last + dir * step;
            if (next - end) * dir >= 0.0 {
                if ok(end) {
                    return end;
                }
                return bisect(last, end, &ok);
            }
            if !ok(next) {
                return bisect(last, next, &ok);
            }
            last = next;
        }
    };
    let a = reach(-1.0, lo);
    let b = reach(1.0, hi);
    if !(a < x && x < b) {
        return Err(StrategyError::DegenerateInterval(x));
    }
    Ok((a, b))
}

/// Last point from `good` toward `bad` satisfying `ok`.
fn bisect(mut good: f64, mut bad: f64, ok: &impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (good + bad);
        if m == good || m == bad {
            break;
        }
        if ok(m) {
            good = m;
        } else {
            bad = m;
        }
    }
    good
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_grid;

    fn x() -> Expr {
        Expr::x()
    }

    #[test]
    fn exit_interval_trivial_cases() {
        let d = DiffusionSpec::wiener(0.1, uniform_grid(-2.0, 2.0, 41)).unwrap();
        let c = PiecewiseFn::smooth(Expr::c(1.0));
        let p = PayoffTriple::new(c.clone(), c.clone(), c);
        assert_eq!(exit_interval(0.3, 0.1, &p, &d).unwrap(), (-2.0, 2.0));
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(x()),
            PiecewiseFn::smooth(Expr::c(0.0)),
            PiecewiseFn::smooth(Expr::c(0.0)),
        );
        let (a, b) = exit_interval(0.0, 0.1, &p, &d).unwrap();
        assert!((a + 0.1).abs() < 1e-12 && (b - 0.1).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn rate_combinators() {
        let r = RateFn::Max(
            Box::new(RateFn::Constants(vec![(0.0, 1.0, 2.0)])),
            Box::new(RateFn::Scaled(Box::new(RateFn::Constants(vec![(0.5, 2.0, 3.0)])), 0.5)),
        );
        assert_eq!(r.eval(0.25), 2.0);
        assert_eq!(r.eval(1.5), 1.5);
        assert_eq!(r.eval(3.0), 0.0);
        let s = RandomizedStrategy {
            player: Player::Two,
            stop_set: PointSet::new(vec![(0.8, 0.9)], vec![]),
            rate: r,
            atoms: vec![Atom { x: 0.2, gamma: 1.0 }],
            epsilon: None,
        };
        assert_eq!(s.rate_at(0.85), 0.0);
        assert_eq!(s.scaled(2.0).atoms[0].gamma, 2.0);
        assert_eq!(s.scaled(2.0).rate_at(0.25), 4.0);
        assert!(s.validate(&uniform_grid(-1.0, 3.0, 41)).is_ok());
    }
}
