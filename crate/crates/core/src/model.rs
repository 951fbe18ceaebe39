//! Diffusion, payoff triple, the six ordering regions and the generator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expr::{Expr, Side};

/// Relative tolerance for kink continuity and kink lookup.
const KINK_TOL: f64 = 1e-12;
/// Samples per piece when scanning `abs` arguments for sign changes.
const KINK_SCAN_SAMPLES: usize = 4096;
const DEFAULT_SCAN_WINDOW: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub expr: Expr,
    d1: Expr,
    d2: Expr,
}

/// A point where the first derivative may jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub x: f64,
    pub left_slope: f64,
    pub right_slope: f64,
}

impl Kink {
    pub fn jump(&self) -> f64 {
        self.right_slope - self.left_slope
    }
}

/// Continuous function given by symbolic pieces on contiguous intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFn {
    pieces: Vec<Piece>,
    kinks: Vec<Kink>,
}

impl PiecewiseFn {
    pub fn smooth(expr: Expr) -> PiecewiseFn {
        PiecewiseFn::new(vec![(f64::NEG_INFINITY, f64::INFINITY, expr)])
            .expect("single piece is always contiguous")
    }

    pub fn new(pieces: Vec<(f64, f64, Expr)>) -> Result<PiecewiseFn, ModelError> {
        PiecewiseFn::with_scan_window(pieces, DEFAULT_SCAN_WINDOW)
    }

    /// Builds the function; `abs`-generated kinks are searched only inside `window`.
    pub fn with_scan_window(
        pieces: Vec<(f64, f64, Expr)>,
        window: (f64, f64),
    ) -> Result<PiecewiseFn, ModelError> {
        if pieces.is_empty() {
            return Err(ModelError::Config {
                field: "pieces".into(),
                message: "at least one piece is required".into(),
            });
        }
        let mut out = Vec::with_capacity(pieces.len());
        for (i, (lo, hi, expr)) in pieces.into_iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(ModelError::Config {
                    field: format!("pieces[{i}].interval"),
                    message: format!("interval [{lo}, {hi}] is empty or invalid"),
                });
            }
            let d1 = expr.derivative();
            let d2 = d1.derivative();
            out.push(Piece { lo, hi, expr, d1, d2 });
        }
        for i in 1..out.len() {
            if out[i].lo != out[i - 1].hi {
                return Err(ModelError::Config {
                    field: format!("pieces[{i}].interval"),
                    message: format!(
                        "pieces must be contiguous: previous ends at {}, this starts at {}",
                        out[i - 1].hi,
                        out[i].lo
                    ),
                });
            }
        }

        let mut kinks = Vec::new();
        for i in 1..out.len() {
            let x = out[i].lo;
            let left = out[i - 1].expr.eval(x);
            let right = out[i].expr.eval(x);
            if (left - right).abs() > KINK_TOL * left.abs().max(right.abs()).max(1.0) {
                return Err(ModelError::Discontinuous { at: x, left, right });
            }
            kinks.push(Kink {
                x,
                left_slope: out[i - 1].d1.eval_side(x, Side::Left),
                right_slope: out[i].d1.eval_side(x, Side::Right),
            });
        }
        for p in &out {
            let lo = p.lo.max(window.0);
            let hi = p.hi.min(window.1);
            if lo >= hi {
                continue;
            }
            for arg in p.expr.abs_arguments() {
                for x in sign_changes(arg, lo, hi) {
                    if x <= p.lo || x >= p.hi {
                        continue;
                    }
                    kinks.push(Kink {
                        x,
                        left_slope: p.d1.eval_side(x, Side::Left),
                        right_slope: p.d1.eval_side(x, Side::Right),
                    });
                }
            }
        }
        kinks.sort_by(|a, b| a.x.total_cmp(&b.x));
        kinks.dedup_by(|a, b| (a.x - b.x).abs() <= KINK_TOL * (1.0 + b.x.abs()));
        Ok(PiecewiseFn { pieces: out, kinks })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn kinks(&self) -> &[Kink] {
        &self.kinks
    }

    pub fn kink_at(&self, x: f64) -> Option<&Kink> {
        self.kinks
            .iter()
            .find(|k| (k.x - x).abs() <= KINK_TOL * (1.0 + k.x.abs()))
    }

    pub fn is_kink(&self, x: f64) -> bool {
        self.kink_at(x).is_some()
    }

    fn piece(&self, x: f64) -> &Piece {
        let idx = self.pieces.partition_point(|p| p.hi <= x);
        &self.pieces[idx.min(self.pieces.len() - 1)]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.piece(x).expr.eval(x)
    }

    /// First derivative; at a kink this is the right-hand piece's value.
    pub fn first_derivative(&self, x: f64) -> f64 {
        self.piece(x).d1.eval(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.piece(x).d2.eval(x)
    }

    /// Covers `[lo, hi]` with its pieces?
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.pieces[0].lo <= lo && self.pieces[self.pieces.len() - 1].hi >= hi
    }

    /// `a*w1 + b*w2` on the common refinement of both piece partitions.
    pub fn linear_combination(a: f64, w1: &PiecewiseFn, b: f64, w2: &PiecewiseFn) -> PiecewiseFn {
        let mut cuts: Vec<f64> = w1
            .pieces
            .iter()
            .chain(&w2.pieces)
            .flat_map(|p| [p.lo, p.hi])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pieces = Vec::new();
        for win in cuts.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let mid = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (false, true) => hi - 1.0,
                (true, false) => lo + 1.0,
                (false, false) => 0.0,
            };
            let e = (Expr::c(a) * w1.piece(mid).expr.clone()
                + Expr::c(b) * w2.piece(mid).expr.clone())
            .simplify();
            pieces.push((lo, hi, e));
        }
        PiecewiseFn::new(pieces).expect("refinement of continuous functions stays continuous")
    }

    /// Config form: `[{"interval": [a, b], "expr": ...}, ...]`, `null` for infinite ends.
    pub fn to_json(&self) -> serde_json::Value {
        let bound = |v: f64| {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::Value::Null
            }
        };
        serde_json::Value::Array(
            self.pieces
                .iter()
                .map(|p| serde_json::json!({"interval": [bound(p.lo), bound(p.hi)], "expr": p.expr.to_json()}))
                .collect(),
        )
    }
}

fn sign_changes(u: &Expr, lo: f64, hi: f64) -> Vec<f64> {
    let n = KINK_SCAN_SAMPLES;
    let step = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_u = u.eval(lo);
    for i in 1..=n {
        let x = if i == n { hi } else { lo + step * i as f64 };
        let ux = u.eval(x);
        if ux == 0.0 {
            roots.push(x);
        } else if prev_u != 0.0 && prev_u.signum() != ux.signum() {
            roots.push(bisect_root(u, prev_x, x, prev_u));
        }
        prev_x = x;
        prev_u = ux;
    }
    roots
}

fn bisect_root(u: &Expr, mut a: f64, mut b: f64, ua: f64) -> f64 {
    let sa = ua.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let um = u.eval(m);
        if um == 0.0 {
            return m;
        }
        if um.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    let m = 0.5 * (a + b);
    // snap to a short decimal when it is an exact zero
    let snapped = (m * 1e6).round() / 1e6;
    if (snapped - m).abs() < 1e-9 && u.eval(snapped) == 0.0 {
        snapped
    } else {
        m
    }
}

/// The three rewards: f (Player 1 stops first), g (Player 2 first), h (simultaneous).
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTriple {
    pub f: PiecewiseFn,
    pub g: PiecewiseFn,
    pub h: PiecewiseFn,
}

impl PayoffTriple {
    pub fn new(f: PiecewiseFn, g: PiecewiseFn, h: PiecewiseFn) -> PayoffTriple {
        PayoffTriple { f, g, h }
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        (self.f.eval(x), self.g.eval(x), self.h.eval(x))
    }

    pub fn check_finite(&self, grid: &[f64]) -> Result<(), ModelError> {
        for &x in grid {
            let (f, g, h) = self.eval(x);
            if !(f.is_finite() && g.is_finite() && h.is_finite()) {
                return Err(ModelError::Config {
                    field: "payoffs".into(),
                    message: format!("payoff not finite at x = {x}: f={f}, g={g}, h={h}"),
                });
            }
        }
        Ok(())
    }

    /// Largest absolute payoff over the grid points.
    pub fn max_abs(&self, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&x| {
                let (f, g, h) = self.eval(x);
                f.abs().max(g.abs()).max(h.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Time-homogeneous diffusion `dX = mu(X) dt + sigma(X) dW` discounted at rate `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub mu: Expr,
    pub sigma: Expr,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub grid: Vec<f64>,
}

impl DiffusionSpec {
    pub fn new(
        mu: Expr,
        sigma: Expr,
        r: f64,
        alpha: f64,
        beta: f64,
        grid: Vec<f64>,
    ) -> Result<DiffusionSpec, ModelError> {
        let d = DiffusionSpec::new_unvalidated(mu, sigma, r, alpha, beta, grid);
        d.validate()?;
        Ok(d)
    }

    /// Skips the invariant checks; degenerate coefficients are only meant for tests.
    pub fn new_unvalidated(
        mu: Expr,
        sigma: Expr,
        r: f64,
        alpha: f64,
        beta: f64,
        grid: Vec<f64>,
    ) -> DiffusionSpec {
        DiffusionSpec {
            mu: mu.simplify(),
            sigma: sigma.simplify(),
            r,
            alpha,
            beta,
            grid,
        }
    }

    /// Standard Wiener process on the real line.
    pub fn wiener(r: f64, grid: Vec<f64>) -> Result<DiffusionSpec, ModelError> {
        DiffusionSpec::new(
            Expr::c(0.0),
            Expr::c(1.0),
            r,
            f64::NEG_INFINITY,
            f64::INFINITY,
            grid,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(ModelError::InvalidDiffusion(format!(
                "discount rate r must be finite and >= 0, got {}",
                self.r
            )));
        }
        if !(self.alpha < self.beta) {
            return Err(ModelError::InvalidDiffusion(format!(
                "state interval ({}, {}) is empty",
                self.alpha, self.beta
            )));
        }
        validate_grid(&self.grid, self.alpha, self.beta)?;
        for &x in &self.grid {
            let s = self.sigma_at(x);
            if !(s > 0.0 && s.is_finite()) {
                return Err(ModelError::InvalidDiffusion(format!(
                    "sigma must be positive on the grid, sigma({x}) = {s}"
                )));
            }
            let m = self.mu_at(x);
            if !m.is_finite() {
                return Err(ModelError::InvalidDiffusion(format!("mu({x}) = {m} is not finite")));
            }
        }
        Ok(())
    }

    pub fn mu_at(&self, x: f64) -> f64 {
        match self.mu {
            Expr::Const(c) => c,
            ref e => e.eval(x),
        }
    }

    pub fn sigma_at(&self, x: f64) -> f64 {
        match self.sigma {
            Expr::Const(c) => c,
            ref e => e.eval(x),
        }
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Same coefficients on a different grid.
    pub fn with_grid(&self, grid: Vec<f64>) -> Result<DiffusionSpec, ModelError> {
        DiffusionSpec::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.r,
            self.alpha,
            self.beta,
            grid,
        )
    }
}

pub fn validate_grid(grid: &[f64], alpha: f64, beta: f64) -> Result<(), ModelError> {
    if grid.len() < 3 {
        return Err(ModelError::InvalidGrid(format!(
            "need at least 3 points, got {}",
            grid.len()
        )));
    }
    for w in grid.windows(2) {
        if !(w[0].is_finite() && w[1].is_finite() && w[1] > w[0]) {
            return Err(ModelError::InvalidGrid(format!(
                "grid must be finite and strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if !(grid[0] > alpha && grid[grid.len() - 1] < beta) {
        return Err(ModelError::InvalidGrid(format!(
            "grid [{}, {}] must lie inside ({alpha}, {beta})",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    Ok(())
}

/// `n` equally spaced points on `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .collect()
}

/// `(L_X - r) w (x) = mu w' + sigma^2 w'' / 2 - r w` away from kinks.
pub fn apply_generator(w: &PiecewiseFn, diffusion: &DiffusionSpec, x: f64) -> Result<f64, ModelError> {
    if w.is_kink(x) {
        return Err(ModelError::KinkEvaluation(x));
    }
    let s = diffusion.sigma_at(x);
    Ok(diffusion.mu_at(x) * w.first_derivative(x) + 0.5 * s * s * w.second_derivative(x)
        - diffusion.r * w.eval(x))
}

/// `w'(xi+) - w'(xi-)`.
pub fn kink_jump(w: &PiecewiseFn, xi: f64) -> Result<f64, ModelError> {
    w.kink_at(xi).map(Kink::jump).ok_or(ModelError::NotAKink(xi))
}

/// Ordering regions of (f, g, h).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// g <= h <= f
    B1,
    /// f <= h < g or f < h <= g
    B2,
    /// h < g < f
    B3,
    /// g < f < h
    B4,
    /// f <= g < h
    B5,
    /// h < f <= g
    B6,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::B1,
        Region::B2,
        Region::B3,
        Region::B4,
        Region::B5,
        Region::B6,
    ];
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::B1 => "B1",
            Region::B2 => "B2",
            Region::B3 => "B3",
            Region::B4 => "B4",
            Region::B5 => "B5",
            Region::B6 => "B6",
        };
        f.write_str(s)
    }
}

/// Pointwise default equality band `1e-9 * (1 + |f| + |g| + |h|)`.
pub fn default_eq_tol(f: f64, g: f64, h: f64) -> f64 {
    1e-9 * (1.0 + f.abs() + g.abs() + h.abs())
}

/// Ranks of (f, g, h) after merging values within `tol` of their sorted neighbour.
///
/// Merging on the sorted sequence keeps the induced order transitive, so the
/// six region predicates below stay exhaustive and disjoint.
fn ordinal_ranks(values: [f64; 3], tol: f64) -> [u8; 3] {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = [0u8; 3];
    let mut r = 0u8;
    for k in 1..3 {
        if values[idx[k]] - values[idx[k - 1]] > tol {
            r += 1;
        }
        ranks[idx[k]] = r;
    }
    ranks
}

/// Ordering facts at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointClass {
    pub region: Region,
    pub f_le_g: bool,
    pub g_le_f: bool,
    pub f_eq_g: bool,
}

pub fn classify_values(x: f64, f: f64, g: f64, h: f64, eq_tol: Option<f64>) -> Result<PointClass, ModelError> {
    let tol = eq_tol.unwrap_or_else(|| default_eq_tol(f, g, h));
    let [rf, rg, rh] = ordinal_ranks([f, g, h], tol);
    let candidates = [
        (Region::B1, rg <= rh && rh <= rf),
        (Region::B2, (rf <= rh && rh < rg) || (rf < rh && rh <= rg)),
        (Region::B3, rh < rg && rg < rf),
        (Region::B4, rg < rf && rf < rh),
        (Region::B5, rf <= rg && rg < rh),
        (Region::B6, rh < rf && rf <= rg),
    ];
    let mut found = None;
    let mut matches = 0;
    for (region, holds) in candidates {
        if holds {
            matches += 1;
            found = Some(region);
        }
    }
    match (found, matches) {
        (Some(region), 1) => Ok(PointClass {
            region,
            f_le_g: rf <= rg,
            g_le_f: rg <= rf,
            f_eq_g: rf == rg,
        }),
        _ => Err(ModelError::ClassificationConflict { x, matches }),
    }
}

pub fn classify_point(payoffs: &PayoffTriple, x: f64, eq_tol: Option<f64>) -> Result<PointClass, ModelError> {
    let (f, g, h) = payoffs.eval(x);
    classify_values(x, f, g, h, eq_tol)
}

/// Per-grid-point region labels and the derived f/g ordering masks.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub grid: Vec<f64>,
    pub labels: Vec<Region>,
    pub b_f_le_g: Vec<bool>,
    pub b_g_le_f: Vec<bool>,
    pub b_f_eq_g: Vec<bool>,
    pub eq_tol: Option<f64>,
}

impl RegionPartition {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn mask(&self, regions: &[Region]) -> Vec<bool> {
        self.labels.iter().map(|l| regions.contains(l)).collect()
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|&&l| l == region).count()
    }

    pub fn is_in(&self, i: usize, regions: &[Region]) -> bool {
        regions.contains(&self.labels[i])
    }
}

pub fn classify_regions(
    payoffs: &PayoffTriple,
    grid: &[f64],
    eq_tol: Option<f64>,
) -> Result<RegionPartition, ModelError> {
    if let Some(t) = eq_tol {
        if !(t >= 0.0) {
            return Err(ModelError::Config {
                field: "eq_tol".into(),
                message: format!("must be >= 0, got {t}"),
            });
        }
    }
    payoffs.check_finite(grid)?;
    let n = grid.len();
    let mut p = RegionPartition {
        grid: grid.to_vec(),
        labels: Vec::with_capacity(n),
        b_f_le_g: Vec::with_capacity(n),
        b_g_le_f: Vec::with_capacity(n),
        b_f_eq_g: Vec::with_capacity(n),
        eq_tol,
    };
    for &x in grid {
        let c = classify_point(payoffs, x, eq_tol)?;
        p.labels.push(c.region);
        p.b_f_le_g.push(c.f_le_g);
        p.b_g_le_f.push(c.g_le_f);
        p.b_f_eq_g.push(c.f_eq_g);
    }
    Ok(p)
}

/// A refined point where the region label changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBoundary {
    pub x: f64,
    pub left: Region,
    pub right: Region,
}

/// Region changes between adjacent grid points, located by bisection to ~1e-12.
pub fn region_boundaries(
    payoffs: &PayoffTriple,
    partition: &RegionPartition,
) -> Result<Vec<RegionBoundary>, ModelError> {
    let mut out = Vec::new();
    for i in 0..partition.len().saturating_sub(1) {
        let (l, r) = (partition.labels[i], partition.labels[i + 1]);
        if l == r {
            continue;
        }
        let (mut a, mut b) = (partition.grid[i], partition.grid[i + 1]);
        while b - a > 1e-12 * (1.0 + a.abs()) {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if classify_point(payoffs, m, partition.eq_tol)?.region == l {
                a = m;
            } else {
                b = m;
            }
        }
        out.push(RegionBoundary {
            x: 0.5 * (a + b),
            left: l,
            right: r,
        });
    }
    Ok(out)
}

/// Chooses a finite computational interval for an unbounded state space.
///
/// Each infinite end is pushed outward from the kink span until the payoff
/// envelope at the cut, discounted by the Laplace transform of the passage
/// time, drops below `1e-6` of the interior payoff scale.
pub fn truncate_domain(
    payoffs: &PayoffTriple,
    mu: &Expr,
    sigma: &Expr,
    r: f64,
    alpha: f64,
    beta: f64,
) -> Result<(f64, f64), ModelError> {
    let mut span_lo = -1.0f64;
    let mut span_hi = 1.0f64;
    for k in payoffs
        .f
        .kinks()
        .iter()
        .chain(payoffs.g.kinks())
        .chain(payoffs.h.kinks())
    {
        span_lo = span_lo.min(k.x);
        span_hi = span_hi.max(k.x);
    }
    span_lo = span_lo.max(alpha);
    span_hi = span_hi.min(beta);
    let anchor = uniform_grid(span_lo, span_hi, 257);
    let scale = 1.0 + payoffs.max_abs(&anchor);

    let cut = |start: f64, dir: f64| -> Result<f64, ModelError> {
        if r <= 0.0 {
            return Err(ModelError::InvalidGrid(
                "automatic truncation needs r > 0; give grid.alpha_num/beta_num explicitly".into(),
            ));
        }
        let mut dist = 1.0;
        while dist < 1e6 {
            let end = start + dir * dist;
            let samples = uniform_grid(start.min(end), start.max(end), 65);
            let (mut m_out, mut s_max) = (0.0f64, 0.0f64);
            for &x in &samples {
                m_out = m_out.max(dir * mu.eval(x));
                s_max = s_max.max(sigma.eval(x).abs());
            }
            let kappa = ((m_out * m_out + 2.0 * r * s_max * s_max).sqrt() - m_out) / (s_max * s_max);
            let (f, g, h) = payoffs.eval(end);
            let env = f.abs().max(g.abs()).max(h.abs());
            if env * (-kappa * dist).exp() < 1e-6 * scale {
                return Ok(end);
            }
            dist *= 1.5;
        }
        Err(ModelError::InvalidGrid(
            "discounted payoff envelope does not decay; give an explicit truncation".into(),
        ))
    };
    let lo = if alpha.is_finite() {
        return Err(ModelError::InvalidGrid(
            "finite alpha needs an explicit grid.alpha_num".into(),
        ));
    } else {
        cut(span_lo, -1.0)?
    };
    let hi = if beta.is_finite() {
        return Err(ModelError::InvalidGrid(
            "finite beta needs an explicit grid.beta_num".into(),
        ));
    } else {
        cut(span_hi, 1.0)?
    };
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_plus_one() -> PiecewiseFn {
        PiecewiseFn::smooth(Expr::x().abs() + 1.0)
    }

    fn ex43_f() -> PiecewiseFn {
        PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 2.0, 2.0 * Expr::x()),
            (2.0, f64::INFINITY, Expr::x().powi(2)),
        ])
        .unwrap()
    }

    fn wiener(r: f64) -> DiffusionSpec {
        DiffusionSpec::wiener(r, uniform_grid(-5.0, 5.0, 11)).unwrap()
    }

    #[test]
    fn generator_of_square_under_wiener() {
        let w = PiecewiseFn::smooth(Expr::x().powi(2));
        assert_eq!(apply_generator(&w, &wiener(0.0), 3.0).unwrap(), 1.0);
    }

    #[test]
    fn generator_matches_worked_numerators() {
        // f = 2x branch of the kinked payoff, r = 1/9, at x = 1
        let r = 1.0 / 9.0;
        let v = apply_generator(&ex43_f(), &wiener(r), 1.0).unwrap();
        assert!((v - (-2.0 * r)).abs() < 1e-15);
        // g = |x| + 2 on (-1, 0), r = 0.1, at x = -0.5
        let g = PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 0.0, Expr::x().abs() + 2.0),
            (0.0, f64::INFINITY, Expr::c(2.0)),
        ])
        .unwrap();
        let v = apply_generator(&g, &wiener(0.1), -0.5).unwrap();
        assert!((v + 0.25).abs() < 1e-15);
    }

    #[test]
    fn generator_rejects_kinks() {
        assert_eq!(
            apply_generator(&abs_plus_one(), &wiener(0.1), 0.0),
            Err(ModelError::KinkEvaluation(0.0))
        );
    }

    #[test]
    fn kink_jumps() {
        assert_eq!(kink_jump(&abs_plus_one(), 0.0).unwrap(), 2.0);
        assert_eq!(kink_jump(&ex43_f(), 2.0).unwrap(), 2.0);
        let pseudo = PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 1.0, 3.0 * Expr::x()),
            (1.0, f64::INFINITY, 3.0 * Expr::x()),
        ])
        .unwrap();
        assert_eq!(kink_jump(&pseudo, 1.0).unwrap(), 0.0);
        assert_eq!(kink_jump(&abs_plus_one(), 0.5), Err(ModelError::NotAKink(0.5)));
    }

    #[test]
    fn discontinuous_pieces_are_rejected() {
        let err = PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 0.0, Expr::c(0.0)),
            (0.0, f64::INFINITY, Expr::c(1.0)),
        ]);
        assert!(matches!(err, Err(ModelError::Discontinuous { .. })));
        let gap = PiecewiseFn::new(vec![(0.0, 1.0, Expr::x()), (2.0, 3.0, Expr::x())]);
        assert!(matches!(gap, Err(ModelError::Config { .. })));
    }

    #[test]
    fn classification_of_worked_points() {
        // g < f < h on (-1, 1)
        let f = abs_plus_one();
        let g = PiecewiseFn::smooth(2.0 * Expr::x().powi(2));
        let h = PiecewiseFn::smooth(Expr::c(3.0) - Expr::x().powi(2));
        let p = PayoffTriple::new(f, g, h);
        let grid = uniform_grid(-0.9, 0.9, 19);
        let part = classify_regions(&p, &grid, None).unwrap();
        assert!(part.labels.iter().all(|&l| l == Region::B4));

        let zero = PiecewiseFn::smooth(Expr::c(0.0));
        let p0 = PayoffTriple::new(zero.clone(), zero.clone(), zero);
        let part = classify_regions(&p0, &grid, None).unwrap();
        assert!(part.labels.iter().all(|&l| l == Region::B1));
        assert!(part.b_f_eq_g.iter().all(|&b| b));

        // h(-0.5) = 2.25 < g(-0.5) = 2.5 < f(-0.5) = 3.25
        let c = classify_values(-0.5, 3.25, 2.5, 2.25, None).unwrap();
        assert_eq!(c.region, Region::B3);
    }

    #[test]
    fn tolerance_band_is_transitive() {
        // f ~ h and h ~ g within tol but f, g further apart
        let c = classify_values(0.0, 0.0, 1.5e-9, 0.8e-9, Some(1e-9)).unwrap();
        assert_eq!(c.region, Region::B1);
        assert!(c.f_eq_g);
    }

    #[test]
    fn abs_kinks_are_detected_inside_pieces() {
        let w = PiecewiseFn::smooth((Expr::x() - 0.3).abs() + (Expr::x() + 2.0).abs());
        let xs: Vec<f64> = w.kinks().iter().map(|k| k.x).collect();
        assert_eq!(xs.len(), 2);
        assert!((xs[0] + 2.0).abs() < 1e-12 && (xs[1] - 0.3).abs() < 1e-12);
        assert!((kink_jump(&w, xs[1]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn region_boundaries_are_refined() {
        // h < f < g for -1 < x < 0, h < g < f for x > 0
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(Expr::x()),
            PiecewiseFn::smooth(Expr::c(0.0)),
            PiecewiseFn::smooth(Expr::c(-1.0)),
        );
        let grid = uniform_grid(-0.9, 1.0 + 1.0 / 3.0, 8);
        let part = classify_regions(&p, &grid, None).unwrap();
        let b = region_boundaries(&p, &part).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].x.abs() < 3e-9, "{}", b[0].x);
        assert_eq!((b[0].left, b[0].right), (Region::B6, Region::B3));
    }

    #[test]
    fn automatic_truncation_decays() {
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(Expr::x().powi(2)),
            PiecewiseFn::smooth(Expr::x().powi(2) + 10.0),
            PiecewiseFn::smooth(Expr::x().powi(2) - 1.0),
        );
        let (lo, hi) = truncate_domain(&p, &Expr::c(0.0), &Expr::c(1.0), 0.1, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!(lo < -20.0 && hi > 20.0);
        let env = hi * hi;
        assert!(env * (-(0.2f64).sqrt() * (hi - 1.0)).exp() < 1e-6 * 12.0);
        assert!(truncate_domain(&p, &Expr::c(0.0), &Expr::c(1.0), 0.0, f64::NEG_INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn diffusion_validation() {
        assert!(DiffusionSpec::wiener(-1.0, uniform_grid(0.0, 1.0, 3)).is_err());
        assert!(DiffusionSpec::wiener(0.1, vec![0.0, 1.0]).is_err());
        assert!(DiffusionSpec::wiener(0.1, vec![0.0, 2.0, 1.0]).is_err());
        let zero_vol = DiffusionSpec::new(Expr::c(0.0), Expr::c(0.0), 0.1, -1e9, 1e9, uniform_grid(0.0, 1.0, 3));
        assert!(zero_vol.is_err());
        let outside = DiffusionSpec::new(Expr::c(0.0), Expr::c(1.0), 0.1, 0.0, 1.0, uniform_grid(0.0, 1.0, 3));
        assert!(outside.is_err());
    }
}
