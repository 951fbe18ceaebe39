//! Double obstacle problem for the associated game, stop-set extraction,
//! martingale certificates and an independent Markov-chain oracle.

use serde::{Deserialize, Serialize};

use crate::associated::AssociatedPayoffs;
use crate::error::{Result, SolverError};
use crate::fd::{solve_tridiagonal, Stencil};
use crate::model::{uniform_grid, DiffusionSpec};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const MAX_POLICY_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Policy {
    Lower,
    Upper,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleOutcome {
    pub v: Vec<f64>,
    /// `max(min(-(Lv+s)/|L_ii|, v-lower), v-upper)` per node, in value units.
    pub residual: Vec<f64>,
    pub iterations: usize,
}

/// Pointwise complementarity residual of the discrete system.
pub fn complementarity_residual(st: &Stencil, source: &[f64], lower: &[f64], upper: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut res = vec![0.0; n];
    for i in 1..n - 1 {
        let c = -(st.apply(v, i) + source[i]) / st.di[i].abs();
        res[i] = c.min(v[i] - lower[i]).max(v[i] - upper[i]);
    }
    res
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Data of one discrete obstacle problem on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleProblem {
    pub grid: Vec<f64>,
    /// Extra killing rate per node, added to the discount.
    pub killing: Vec<f64>,
    /// Source `s` in `L v + s = 0` on the continuation set.
    pub source: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub boundary: (f64, f64),
}

impl ObstacleProblem {
    pub fn new(grid: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, boundary: (f64, f64)) -> ObstacleProblem {
        let n = grid.len();
        ObstacleProblem {
            grid,
            killing: vec![0.0; n],
            source: vec![0.0; n],
            lower,
            upper,
            boundary,
        }
    }

    fn coarsen(&self) -> (ObstacleProblem, Vec<usize>) {
        let n = self.grid.len();
        let mut idx: Vec<usize> = (0..n).step_by(2).collect();
        if *idx.last().unwrap() != n - 1 {
            idx.push(n - 1);
        }
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        (
            ObstacleProblem {
                grid: pick(&self.grid),
                killing: pick(&self.killing),
                source: pick(&self.source),
                lower: pick(&self.lower),
                upper: pick(&self.upper),
                boundary: self.boundary,
            },
            idx,
        )
    }
}

const COARSEST: usize = 129;

/// Solves `max(min(-(L v + s), v - lower), v - upper) = 0` on interior nodes
/// with `v = boundary` at the two end nodes; obstacles may be infinite.
/// Policy iteration is warm-started from the solution on every other node,
/// recursively, so free boundaries only move a few cells per level.
pub fn solve_obstacle(
    prob: &ObstacleProblem,
    diffusion: &DiffusionSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ObstacleOutcome, SolverError> {
    let n = prob.grid.len();
    if n < 3
        || [&prob.killing, &prob.source, &prob.lower, &prob.upper]
            .iter()
            .any(|v| v.len() != n)
    {
        return Err(SolverError::InvalidProblem("array lengths disagree with the grid".into()));
    }
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProblem(format!("tol must be > 0, got {tol}")));
    }
    for i in 0..n {
        if prob.lower[i] > prob.upper[i] {
            return Err(SolverError::ObstacleCrossing {
                x: prob.grid[i],
                lower: prob.lower[i],
                upper: prob.upper[i],
            });
        }
    }
    let init = if n > COARSEST {
        let (coarse, idx) = prob.coarsen();
        let c = solve_obstacle(&coarse, diffusion, tol, max_iter)?;
        let mut v = vec![0.0; n];
        for w in 0..idx.len() - 1 {
            let (a, b) = (idx[w], idx[w + 1]);
            for (i, vi) in v.iter_mut().enumerate().take(b + 1).skip(a) {
                let t = (prob.grid[i] - prob.grid[a]) / (prob.grid[b] - prob.grid[a]);
                *vi = c.v[w] + t * (c.v[w + 1] - c.v[w]);
            }
        }
        v
    } else {
        (0..n)
            .map(|i| {
                if prob.lower[i].is_finite() {
                    prob.lower[i]
                } else if prob.upper[i].is_finite() {
                    prob.upper[i]
                } else {
                    0.0
                }
            })
            .collect()
    };
    let st = Stencil::generator(&prob.grid, diffusion, Some(&prob.killing));
    policy_iteration(prob, &st, init, tol, max_iter)
}

fn policy_iteration(
    prob: &ObstacleProblem,
    st: &Stencil,
    mut v: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<ObstacleOutcome, SolverError> {
    let n = v.len();
    let (source, lower, upper) = (&prob.source, &prob.lower, &prob.upper);
    for i in 1..n - 1 {
        v[i] = v[i].clamp(lower[i], upper[i]);
    }
    v[0] = prob.boundary.0;
    v[n - 1] = prob.boundary.1;

    let mut a = vec![0.0; n];
    let mut b = vec![1.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut previous: Option<Vec<Policy>> = None;
    let mut iterations = 0;
    while iterations < MAX_POLICY_ITER.min(max_iter) {
        let res = complementarity_residual(st, source, lower, upper, &v);
        if max_abs(&res) <= tol {
            return Ok(ObstacleOutcome { v, residual: res, iterations });
        }
        let mut policy = vec![Policy::Continue; n];
        for i in 1..n - 1 {
            let cont = -(st.apply(&v, i) + source[i]) / st.di[i].abs();
            let low = v[i] - lower[i];
            let inner = if cont <= low { Policy::Continue } else { Policy::Lower };
            let inner_val = cont.min(low);
            policy[i] = if v[i] - upper[i] >= inner_val { Policy::Upper } else { inner };
        }
        if previous.as_ref() == Some(&policy) {
            break;
        }
        for i in 0..n {
            a[i] = 0.0;
            c[i] = 0.0;
            b[i] = 1.0;
            d[i] = match (i, policy[i]) {
                (0, _) => prob.boundary.0,
                (j, _) if j == n - 1 => prob.boundary.1,
                (_, Policy::Lower) => lower[i],
                (_, Policy::Upper) => upper[i],
                (_, Policy::Continue) => {
                    a[i] = st.lo[i];
                    b[i] = st.di[i];
                    c[i] = st.up[i];
                    -source[i]
                }
            };
        }
        v = solve_tridiagonal(&a, &b, &c, &d);
        previous = Some(policy);
        iterations += 1;
    }

    // projected Gauss-Seidel from the current iterate
    for i in 1..n - 1 {
        v[i] = v[i].clamp(lower[i], upper[i]);
    }
    while iterations < max_iter {
        for i in 1..n - 1 {
            let free = -(source[i] + st.lo[i] * v[i - 1] + st.up[i] * v[i + 1]) / st.di[i];
            v[i] = free.clamp(lower[i], upper[i]);
        }
        iterations += 1;
        if iterations % 16 == 0 {
            let res = complementarity_residual(st, source, lower, upper, &v);
            if max_abs(&res) <= tol {
                return Ok(ObstacleOutcome { v, residual: res, iterations });
            }
        }
    }
    let res = complementarity_residual(st, source, lower, upper, &v);
    Err(SolverError::NonConvergence {
        iterations,
        max_residual: max_abs(&res),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaries {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub d1_mask: Vec<bool>,
    pub d2_mask: Vec<bool>,
    pub residual: Vec<f64>,
    pub free_boundaries: FreeBoundaries,
    pub iterations: usize,
}

impl ValueSolution {
    /// Wraps arbitrary values (e.g. a candidate to be certified) on the associated grid.
    pub fn from_values(v: Vec<f64>, assoc: &AssociatedPayoffs, diffusion: &DiffusionSpec) -> ValueSolution {
        let st = Stencil::generator(&assoc.grid, diffusion, None);
        let zero = vec![0.0; v.len()];
        let residual = complementarity_residual(&st, &zero, &assoc.f_tilde, &assoc.g_tilde, &v);
        let mut sol = ValueSolution {
            grid: assoc.grid.clone(),
            v,
            f_tilde: assoc.f_tilde.clone(),
            g_tilde: assoc.g_tilde.clone(),
            d1_mask: Vec::new(),
            d2_mask: Vec::new(),
            residual,
            free_boundaries: FreeBoundaries::default(),
            iterations: 0,
        };
        let (d1, d2, fb) = extract_stop_sets(&sol, assoc, None);
        sol.d1_mask = d1;
        sol.d2_mask = d2;
        sol.free_boundaries = fb;
        sol
    }

    /// Linear interpolation of v.
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.v, x)
    }

    /// Payoff scale used for relative tolerances.
    pub fn scale(&self) -> f64 {
        payoff_scale(&self.f_tilde, &self.g_tilde)
    }
}

pub fn payoff_scale(f_tilde: &[f64], g_tilde: &[f64]) -> f64 {
    1.0 + f_tilde
        .iter()
        .chain(g_tilde)
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn interpolate(grid: &[f64], v: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return v[0];
    }
    if x >= grid[n - 1] {
        return v[n - 1];
    }
    let i = grid.partition_point(|g| *g <= x) - 1;
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    v[i] + t * (v[i + 1] - v[i])
}

/// Value of the associated game. `tol` is relative to the payoff scale.
pub fn solve_value(
    assoc: &AssociatedPayoffs,
    diffusion: &DiffusionSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ValueSolution, SolverError> {
    let grid = &assoc.grid;
    let n = grid.len();
    if diffusion.grid.len() != n || diffusion.grid != *grid {
        return Err(SolverError::InvalidProblem(
            "associated payoffs and diffusion use different grids".into(),
        ));
    }
    let scale = payoff_scale(&assoc.f_tilde, &assoc.g_tilde);
    let prob = ObstacleProblem::new(
        grid.clone(),
        assoc.f_tilde.clone(),
        assoc.g_tilde.clone(),
        (assoc.f_tilde[0], assoc.f_tilde[n - 1]),
    );
    let out = solve_obstacle(&prob, diffusion, tol * scale, max_iter)?;
    let mut sol = ValueSolution {
        grid: grid.clone(),
        v: out.v,
        f_tilde: assoc.f_tilde.clone(),
        g_tilde: assoc.g_tilde.clone(),
        d1_mask: Vec::new(),
        d2_mask: Vec::new(),
        residual: out.residual,
        free_boundaries: FreeBoundaries::default(),
        iterations: out.iterations,
    };
    let (d1, d2, fb) = extract_stop_sets(&sol, assoc, None);
    sol.d1_mask = d1;
    sol.d2_mask = d2;
    sol.free_boundaries = fb;
    Ok(sol)
}

pub fn default_mask_tol(v: f64) -> f64 {
    1e-7 * (1.0 + v.abs())
}

/// Stop masks `{|v - f~| <= tol}`, `{|v - g~| <= tol}` and refined free boundaries.
pub fn extract_stop_sets(
    sol: &ValueSolution,
    assoc: &AssociatedPayoffs,
    eq_tol: Option<f64>,
) -> (Vec<bool>, Vec<bool>, FreeBoundaries) {
    let n = sol.v.len();
    let tols: Vec<f64> = sol
        .v
        .iter()
        .map(|&v| eq_tol.unwrap_or_else(|| default_mask_tol(v)))
        .collect();
    let gap1: Vec<f64> = (0..n).map(|i| sol.v[i] - assoc.f_tilde[i]).collect();
    let gap2: Vec<f64> = (0..n).map(|i| assoc.g_tilde[i] - sol.v[i]).collect();
    let d1: Vec<bool> = (0..n).map(|i| gap1[i].abs() <= tols[i]).collect();
    let d2: Vec<bool> = (0..n).map(|i| gap2[i].abs() <= tols[i]).collect();
    let fb = FreeBoundaries {
        d1: mask_flips(&d1)
            .map(|i| refine_free_boundary(&sol.grid, &gap1, &d1, &tols, i))
            .collect(),
        d2: mask_flips(&d2)
            .map(|i| refine_free_boundary(&sol.grid, &gap2, &d2, &tols, i))
            .collect(),
    };
    (d1, d2, fb)
}

fn mask_flips(mask: &[bool]) -> impl Iterator<Item = usize> + '_ {
    (0..mask.len().saturating_sub(1)).filter(move |&i| mask[i] != mask[i + 1])
}

/// Locates the contact point between nodes `i` and `i + 1` from a quadratic
/// model of the continuation-side gap, fitted where the gap clearly exceeds
/// the mask tolerance. An upward parabola with its vertex close by is read as
/// tangential contact, anything else as a transversal crossing.
pub fn refine_free_boundary(grid: &[f64], gap: &[f64], mask: &[bool], tols: &[f64], i: usize) -> f64 {
    let n = grid.len();
    let fallback = 0.5 * (grid[i] + grid[i + 1]);
    let (stop, j0, dir): (usize, usize, isize) = if mask[i] { (i, i + 1, 1) } else { (i + 1, i, -1) };
    let step = |j: usize, k: isize| -> Option<usize> {
        let t = j as isize + k * dir;
        (t >= 0 && (t as usize) < n && !mask[t as usize]).then_some(t as usize)
    };
    let mut j1 = j0;
    while gap[j1] < 50.0 * tols[j1] {
        match step(j1, 1) {
            Some(t) => j1 = t,
            None => return fallback,
        }
    }
    let s = ((j1 as isize - j0 as isize).abs() / 2).max(1);
    let (Some(j2), Some(j3)) = (step(j1, s), step(j1, 2 * s)) else {
        return fallback;
    };
    let x0 = grid[stop];
    let (t1, t2, t3) = (grid[j1] - x0, grid[j2] - x0, grid[j3] - x0);
    let (e1, e2, e3) = (gap[j1], gap[j2], gap[j3]);
    let d12 = (e2 - e1) / (t2 - t1);
    let d23 = (e3 - e2) / (t3 - t2);
    let qa = (d23 - d12) / (t3 - t1);
    let qb = d12 - qa * (t1 + t2);
    let qc = e1 - qa * t1 * t1 - qb * t1;
    let h = (grid[j0] - x0).abs();
    let reach = (grid[j1] - x0).abs() + 2.0 * h;
    let near = |t: f64| t.is_finite() && t.abs() <= reach;
    let vertex = -qb / (2.0 * qa);
    let candidate = if qa > 0.0 && near(vertex) {
        vertex
    } else if qa.abs() < 1e-300 {
        -qc / qb
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            vertex
        } else {
            let sq = disc.sqrt();
            let r1 = (-qb - sq) / (2.0 * qa);
            let r2 = (-qb + sq) / (2.0 * qa);
            let cont = grid[j0] - x0;
            // the root closest to the flip cell
            if (r1 - 0.5 * cont).abs() < (r2 - 0.5 * cont).abs() {
                r1
            } else {
                r2
            }
        }
    };
    if near(candidate) {
        x0 + candidate
    } else {
        fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    /// `L_h v >= -tol` off D1*
    Submartingale,
    /// `L_h v <= tol` off D2*
    Supermartingale,
    /// `f~ <= v <= g~`
    Ordering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub x: f64,
    pub check: Check,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub checked: usize,
    pub violations: Vec<CertificateEntry>,
    pub worst_sub: f64,
    pub worst_super: f64,
    pub worst_order: f64,
    pub pass: bool,
}

/// Checks the sub/supermartingale sides of the value on the grid.
/// `tol` is absolute, in value per unit time; the roundoff of the stencil
/// itself is added pointwise.
pub fn verify_martingale_conditions(sol: &ValueSolution, diffusion: &DiffusionSpec, tol: f64) -> MartingaleReport {
    let n = sol.grid.len();
    let st = Stencil::generator(&sol.grid, diffusion, None);
    let mut rep = MartingaleReport {
        checked: 0,
        violations: Vec::new(),
        worst_sub: 0.0,
        worst_super: 0.0,
        worst_order: 0.0,
        pass: true,
    };
    for i in 0..n {
        let x = sol.grid[i];
        let v = sol.v[i];
        let order = (sol.f_tilde[i] - v).max(v - sol.g_tilde[i]);
        rep.worst_order = rep.worst_order.max(order);
        if order > default_mask_tol(v) {
            rep.violations.push(CertificateEntry { x, check: Check::Ordering, value: order });
        }
        if i == 0 || i == n - 1 {
            continue;
        }
        rep.checked += 1;
        let lv = st.apply(&sol.v, i);
        let mag = sol.v[i - 1].abs().max(v.abs()).max(sol.v[i + 1].abs());
        let round = 8.0 * f64::EPSILON * (st.lo[i] + st.di[i].abs() + st.up[i]) * (1.0 + mag);
        if !sol.d1_mask[i] {
            rep.worst_sub = rep.worst_sub.max(-lv);
            if lv < -(tol + round) {
                rep.violations.push(CertificateEntry { x, check: Check::Submartingale, value: lv });
            }
        }
        if !sol.d2_mask[i] {
            rep.worst_super = rep.worst_super.max(lv);
            if lv > tol + round {
                rep.violations.push(CertificateEntry { x, check: Check::Supermartingale, value: lv });
            }
        }
    }
    rep.pass = rep.violations.is_empty();
    rep
}

/// Largest stable chain step for `n_states` equally spaced states on `[lo, hi]`.
pub fn oracle_time_step(diffusion: &DiffusionSpec, lo: f64, hi: f64, n_states: usize) -> f64 {
    let h = (hi - lo) / (n_states - 1) as f64;
    let worst = uniform_grid(lo, hi, n_states)
        .iter()
        .map(|&x| {
            let s = diffusion.sigma_at(x);
            s * s + diffusion.mu_at(x).abs() * h
        })
        .fold(0.0f64, f64::max);
    0.9 * h * h / worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub sweeps: usize,
}

/// Value iteration `v <- max(f~, min(g~, e^{-r dt} E v))` on a birth-death
/// chain over `n_states` equally spaced states spanning the associated grid.
pub fn brute_force_oracle(
    assoc: &AssociatedPayoffs,
    diffusion: &DiffusionSpec,
    n_states: usize,
    dt: f64,
) -> Result<OracleSolution> {
    if !(3..=400).contains(&n_states) {
        return Err(SolverError::InvalidProblem(format!("n_states must be in 3..=400, got {n_states}")).into());
    }
    let lo = assoc.grid[0];
    let hi = assoc.grid[assoc.grid.len() - 1];
    let grid = uniform_grid(lo, hi, n_states);
    let h = grid[1] - grid[0];
    let mut ft = Vec::with_capacity(n_states);
    let mut gt = Vec::with_capacity(n_states);
    for &x in &grid {
        let (a, b) = assoc.eval_at(x)?;
        ft.push(a);
        gt.push(b);
    }
    let mut pu = vec![0.0; n_states];
    let mut pd = vec![0.0; n_states];
    for i in 1..n_states - 1 {
        let s = diffusion.sigma_at(grid[i]);
        let mu = diffusion.mu_at(grid[i]);
        pu[i] = (0.5 * s * s + mu.max(0.0) * h) * dt / (h * h);
        pd[i] = (0.5 * s * s + (-mu).max(0.0) * h) * dt / (h * h);
        if !(dt > 0.0) || pu[i] + pd[i] > 1.0 {
            return Err(SolverError::InvalidTimeStep(format!(
                "dt = {dt} gives transition mass {} > 1 at x = {}",
                pu[i] + pd[i],
                grid[i]
            ))
            .into());
        }
    }
    let disc = (-diffusion.r * dt).exp();
    let scale = payoff_scale(&ft, &gt);
    let mut v = ft.clone();
    let cap = 5_000_000;
    let mut sweeps = 0;
    loop {
        let mut change = 0.0f64;
        for i in 1..n_states - 1 {
            let cont = disc * (pu[i] * v[i + 1] + pd[i] * v[i - 1] + (1.0 - pu[i] - pd[i]) * v[i]);
            let nv = ft[i].max(gt[i].min(cont));
            change = change.max((nv - v[i]).abs());
            v[i] = nv;
        }
        sweeps += 1;
        if change <= 1e-13 * scale {
            break;
        }
        if sweeps >= cap {
            return Err(SolverError::NonContraction { iterations: sweeps, change }.into());
        }
    }
    Ok(OracleSolution { grid, v, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::associated::build_associated_payoffs;
    use crate::expr::Expr;
    use crate::model::{classify_regions, PayoffTriple, PiecewiseFn};

    fn setup(p: &PayoffTriple, r: f64, lo: f64, hi: f64, n: usize) -> (AssociatedPayoffs, DiffusionSpec) {
        let grid = uniform_grid(lo, hi, n);
        let d = DiffusionSpec::wiener(r, grid.clone()).unwrap();
        let part = classify_regions(p, &grid, None).unwrap();
        (build_associated_payoffs(p, &part).unwrap(), d)
    }

    #[test]
    fn pinched_obstacles_give_the_obstacle() {
        let w = PiecewiseFn::smooth(Expr::x().abs() + 1.0);
        let p = PayoffTriple::new(w.clone(), w.clone(), w);
        let (a, d) = setup(&p, 0.1, -2.0, 2.0, 101);
        let sol = solve_value(&a, &d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.v, a.f_tilde);
        assert!(sol.d1_mask.iter().all(|&b| b) && sol.d2_mask.iter().all(|&b| b));
    }

    #[test]
    fn obstacle_crossing_is_reported() {
        let grid = uniform_grid(0.0, 1.0, 5);
        let d = DiffusionSpec::wiener(0.1, grid.clone()).unwrap();
        let mut lower = vec![0.0; 5];
        lower[2] = 2.0;
        let prob = ObstacleProblem::new(grid, lower, vec![1.0; 5], (0.0, 0.0));
        let err = solve_obstacle(&prob, &d, 1e-10, 100);
        assert!(matches!(err, Err(SolverError::ObstacleCrossing { .. })));
    }

    #[test]
    fn dominated_upper_payoff_gives_zero() {
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(Expr::c(0.0)),
            PiecewiseFn::smooth(Expr::c(1.0)),
            PiecewiseFn::smooth(Expr::c(0.5)),
        );
        let (a, d) = setup(&p, 0.1, -3.0, 3.0, 61);
        let sol = solve_value(&a, &d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(sol.v.iter().all(|v| v.abs() < 1e-9));
        let oracle = brute_force_oracle(&a, &d, 61, oracle_time_step(&d, -3.0, 3.0, 61)).unwrap();
        assert!(oracle.v.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_refinement_locates_tangency() {
        let grid = uniform_grid(0.0, 1.0, 1001);
        let b = 0.4567;
        let gap: Vec<f64> = grid.iter().map(|&x| if x < b { 0.0 } else { 3.0 * (x - b).powi(2) }).collect();
        let tols = vec![1e-6; grid.len()];
        let mask: Vec<bool> = gap.iter().map(|g| *g <= 1e-6).collect();
        let i = (0..1000).find(|&i| mask[i] != mask[i + 1]).unwrap();
        let x = refine_free_boundary(&grid, &gap, &mask, &tols, i);
        assert!((x - b).abs() < 1e-6, "{x}");

        let gap: Vec<f64> = grid.iter().map(|&x| (b - x).max(0.0) * 2.0).collect();
        let mask: Vec<bool> = gap.iter().map(|g| *g <= 1e-6).collect();
        let i = (0..1000).find(|&i| mask[i] != mask[i + 1]).unwrap();
        let x = refine_free_boundary(&grid, &gap, &mask, &tols, i);
        assert!((x - b).abs() < 1e-6, "{x}");
    }

    #[test]
    fn certificate_flags_forced_violation() {
        // v := f~ = x^2 has (L - r) f~ = 1 - r x^2 > 0 near 0, off D2*
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(Expr::x().powi(2)),
            PiecewiseFn::smooth(Expr::x().powi(2) + 10.0),
            PiecewiseFn::smooth(Expr::x().powi(2) - 1.0),
        );
        let (a, d) = setup(&p, 0.1, -8.0, 8.0, 801);
        let forced = ValueSolution::from_values(a.f_tilde.clone(), &a, &d);
        let rep = verify_martingale_conditions(&forced, &d, 1e-6);
        assert!(!rep.pass);
        assert!(rep.violations.iter().any(|e| e.check == Check::Supermartingale));
        let sol = solve_value(&a, &d, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(verify_martingale_conditions(&sol, &d, 1e-6 * sol.scale()).pass);
    }
}
