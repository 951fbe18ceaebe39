//! Monotone finite-difference stencil for `L_X - r - kappa` and a tridiagonal solver.

use crate::model::DiffusionSpec;

/// Discount used in place of an exact zero so the discrete operator stays invertible.
pub const R_EPS: f64 = 1e-12;

/// Row coefficients of `(L v)_i = lo[i] v[i-1] + di[i] v[i] + up[i] v[i+1]`.
/// Rows 0 and n-1 are left zero and treated as Dirichlet by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub lo: Vec<f64>,
    pub di: Vec<f64>,
    pub up: Vec<f64>,
}

impl Stencil {
    /// Upwind drift, central second difference, discount `max(r, R_EPS)`,
    /// plus an optional per-node killing rate.
    pub fn generator(grid: &[f64], diffusion: &DiffusionSpec, killing: Option<&[f64]>) -> Stencil {
        let n = grid.len();
        let r = diffusion.r.max(R_EPS);
        let mut st = Stencil {
            lo: vec![0.0; n],
            di: vec![0.0; n],
            up: vec![0.0; n],
        };
        for i in 1..n - 1 {
            let x = grid[i];
            let hm = x - grid[i - 1];
            let hp = grid[i + 1] - x;
            let s = diffusion.sigma_at(x);
            let s2 = s * s;
            let mu = diffusion.mu_at(x);
            let lo = s2 / (hm * (hm + hp)) + (-mu).max(0.0) / hm;
            let up = s2 / (hp * (hm + hp)) + mu.max(0.0) / hp;
            let k = killing.map_or(0.0, |k| k[i]);
            st.lo[i] = lo;
            st.up[i] = up;
            st.di[i] = -lo - up - r - k;
        }
        st
    }

    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }

    /// `(L v)_i` at an interior node.
    pub fn apply(&self, v: &[f64], i: usize) -> f64 {
        self.lo[i] * v[i - 1] + self.di[i] * v[i] + self.up[i] * v[i + 1]
    }
}

/// Solves `a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = d[i]` (Thomas algorithm).
/// The matrix must be diagonally dominant; `a[0]` and `c[n-1]` are ignored.
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::uniform_grid;

    #[test]
    fn thomas_matches_dense_solution() {
        let a = [0.0, -1.0, -1.0, -1.0];
        let b = [4.0, 4.0, 4.0, 4.0];
        let c = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let d: Vec<f64> = (0..4)
            .map(|i| {
                b[i] * x[i] + if i > 0 { a[i] * x[i - 1] } else { 0.0 } + if i < 3 { c[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let got = solve_tridiagonal(&a, &b, &c, &d);
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stencil_is_exact_on_quadratics_without_drift() {
        let grid = vec![0.0, 0.3, 1.0, 1.2, 2.0];
        let d = DiffusionSpec::new(Expr::c(0.0), Expr::c(2.0), 0.0, -10.0, 10.0, grid.clone()).unwrap();
        let st = Stencil::generator(&grid, &d, None);
        let v: Vec<f64> = grid.iter().map(|x| x * x).collect();
        for i in 1..4 {
            assert!((st.apply(&v, i) - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stencil_is_monotone() {
        let grid = uniform_grid(-1.0, 1.0, 21);
        let d = DiffusionSpec::new(Expr::x() * Expr::c(-3.0), Expr::c(0.2), 0.05, -10.0, 10.0, grid.clone()).unwrap();
        let st = Stencil::generator(&grid, &d, None);
        for i in 1..20 {
            assert!(st.lo[i] >= 0.0 && st.up[i] >= 0.0);
            assert!(-st.di[i] > st.lo[i] + st.up[i]);
        }
    }
}
