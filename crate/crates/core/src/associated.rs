//! Ordered payoffs (f~, g~) of the associated game; h~ is f~.

use serde::{Deserialize, Serialize};

use crate::error::{AssociatedError, ModelError};
use crate::model::{classify_point, PayoffTriple, PointClass, Region, RegionPartition};

/// Which original payoff supplies the common value where g <= f.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    H,
    G,
    F,
    FeqG,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedPayoffs {
    pub grid: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub g_tilde: Vec<f64>,
    /// `None` where f < g (there f~ = f and g~ = g).
    pub source: Vec<Option<Source>>,
    pub payoffs: PayoffTriple,
    pub eq_tol: Option<f64>,
}

fn tilde(f: f64, g: f64, h: f64, class: PointClass) -> (f64, f64, Option<Source>) {
    match class.region {
        Region::B1 => (h, h, Some(Source::H)),
        Region::B3 => (g, g, Some(Source::G)),
        Region::B4 => (f, f, Some(Source::F)),
        _ if class.f_eq_g => (f, f, Some(Source::FeqG)),
        _ => (f, g, None),
    }
}

impl AssociatedPayoffs {
    /// (f~, g~) at an arbitrary point, classified afresh.
    pub fn eval_at(&self, x: f64) -> Result<(f64, f64), ModelError> {
        let (f, g, h) = self.payoffs.eval(x);
        let c = classify_point(&self.payoffs, x, self.eq_tol)?;
        let (ft, gt, _) = tilde(f, g, h, c);
        Ok((ft, gt))
    }
}

pub fn build_associated_payoffs(
    payoffs: &PayoffTriple,
    partition: &RegionPartition,
) -> Result<AssociatedPayoffs, AssociatedError> {
    let n = partition.len();
    let mut out = AssociatedPayoffs {
        grid: partition.grid.clone(),
        f_tilde: Vec::with_capacity(n),
        g_tilde: Vec::with_capacity(n),
        source: Vec::with_capacity(n),
        payoffs: payoffs.clone(),
        eq_tol: partition.eq_tol,
    };
    for i in 0..n {
        let x = partition.grid[i];
        let (f, g, h) = payoffs.eval(x);
        let class = PointClass {
            region: partition.labels[i],
            f_le_g: partition.b_f_le_g[i],
            g_le_f: partition.b_g_le_f[i],
            f_eq_g: partition.b_f_eq_g[i],
        };
        let (ft, gt, src) = tilde(f, g, h, class);
        let tol = partition
            .eq_tol
            .unwrap_or_else(|| crate::model::default_eq_tol(f, g, h));
        if ft > gt + tol {
            return Err(AssociatedError::OrderingViolation {
                x,
                f_tilde: ft,
                g_tilde: gt,
            });
        }
        out.f_tilde.push(ft);
        out.g_tilde.push(gt);
        out.source.push(src);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{classify_regions, uniform_grid, PiecewiseFn};

    #[test]
    fn ordered_triple_is_identity() {
        let p = PayoffTriple::new(
            PiecewiseFn::smooth(Expr::x().powi(2)),
            PiecewiseFn::smooth(Expr::x().powi(2) + 2.0),
            PiecewiseFn::smooth(Expr::x().powi(2) + 1.0),
        );
        let grid = uniform_grid(-2.0, 2.0, 41);
        let a = build_associated_payoffs(&p, &classify_regions(&p, &grid, None).unwrap()).unwrap();
        for (i, &x) in grid.iter().enumerate() {
            assert_eq!(a.f_tilde[i], p.f.eval(x));
            assert_eq!(a.g_tilde[i], p.g.eval(x));
            assert_eq!(a.source[i], None);
        }
    }

    #[test]
    fn common_value_by_region() {
        // h < g < f at -0.5: common value g
        let f = PiecewiseFn::smooth((Expr::x() - 1.0).powi(2) + 1.0);
        let g = PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 0.0, Expr::x().abs() + 2.0),
            (0.0, f64::INFINITY, Expr::c(2.0)),
        ])
        .unwrap();
        let h = PiecewiseFn::new(vec![
            (f64::NEG_INFINITY, 0.0, Expr::x().powi(2) + 2.0),
            (0.0, f64::INFINITY, Expr::c(2.0)),
        ])
        .unwrap();
        let p = PayoffTriple::new(f, g, h);
        let grid = vec![-0.75, -0.5, -0.25];
        let a = build_associated_payoffs(&p, &classify_regions(&p, &grid, None).unwrap()).unwrap();
        assert_eq!(a.f_tilde[1], 2.5);
        assert_eq!(a.g_tilde[1], 2.5);
        assert_eq!(a.source[1], Some(Source::G));
        assert_eq!(a.eval_at(-0.5).unwrap(), (2.5, 2.5));
    }
}
