//! JSON problem configs and the assembled `Problem`.

use serde_json::{json, Value};

use crate::associated::{build_associated_payoffs, AssociatedPayoffs};
use crate::error::{ModelError, Result};
use crate::expr::Expr;
use crate::model::{
    classify_regions, truncate_domain, uniform_grid, DiffusionSpec, PayoffTriple, PiecewiseFn, RegionPartition,
};
use crate::solver::{solve_value, ValueSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const DEFAULT_GRID_N: usize = 2001;

/// A fully specified game: diffusion on a computational grid plus payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub diffusion: DiffusionSpec,
    pub payoffs: PayoffTriple,
    pub eq_tol: Option<f64>,
}

/// Partition, associated payoffs and value of one problem.
#[derive(Debug, Clone)]
pub struct Solved {
    pub partition: RegionPartition,
    pub assoc: AssociatedPayoffs,
    pub sol: ValueSolution,
}

impl Problem {
    pub fn grid(&self) -> &[f64] {
        &self.diffusion.grid
    }

    pub fn partition(&self) -> Result<RegionPartition> {
        Ok(classify_regions(&self.payoffs, self.grid(), self.eq_tol)?)
    }

    pub fn associated(&self) -> Result<(RegionPartition, AssociatedPayoffs)> {
        let part = self.partition()?;
        let assoc = build_associated_payoffs(&self.payoffs, &part)?;
        Ok((part, assoc))
    }

    pub fn solve(&self) -> Result<Solved> {
        self.solve_with(DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    pub fn solve_with(&self, tol: f64, max_iter: usize) -> Result<Solved> {
        let (partition, assoc) = self.associated()?;
        let sol = solve_value(&assoc, &self.diffusion, tol, max_iter)?;
        Ok(Solved { partition, assoc, sol })
    }

    /// Same problem on `n` equally spaced points over the current grid span.
    pub fn with_grid_n(&self, n: usize) -> Result<Problem> {
        let grid = uniform_grid(self.diffusion.lo(), self.diffusion.hi(), n);
        Ok(Problem {
            diffusion: self.diffusion.with_grid(grid)?,
            ..self.clone()
        })
    }

    pub fn from_json_str(text: &str) -> Result<Problem> {
        let v: Value = serde_json::from_str(text)?;
        Ok(Problem::from_json(&v)?)
    }

    pub fn from_json(v: &Value) -> Result<Problem, ModelError> {
        let obj = |v: &'_ Value, field: &str| -> Result<serde_json::Map<String, Value>, ModelError> {
            v.as_object().cloned().ok_or_else(|| ModelError::Config {
                field: field.into(),
                message: "expected an object".into(),
            })
        };
        let root = obj(v, "$")?;
        let get = |m: &serde_json::Map<String, Value>, key: &str, field: &str| -> Result<Value, ModelError> {
            m.get(key).cloned().ok_or_else(|| ModelError::Config {
                field: field.into(),
                message: "missing".into(),
            })
        };
        let name = root
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("problem")
            .to_string();

        let d = obj(&get(&root, "diffusion", "diffusion")?, "diffusion")?;
        let mu = Expr::from_json(&get(&d, "mu", "diffusion.mu")?, "diffusion.mu")?;
        let sigma = Expr::from_json(&get(&d, "sigma", "diffusion.sigma")?, "diffusion.sigma")?;
        let r = number(&get(&d, "r", "diffusion.r")?, "diffusion.r")?;
        let alpha = bound(d.get("alpha"), f64::NEG_INFINITY, "diffusion.alpha")?;
        let beta = bound(d.get("beta"), f64::INFINITY, "diffusion.beta")?;

        let (n, alpha_num, beta_num, eq_tol) = match root.get("grid") {
            None => (DEFAULT_GRID_N, None, None, None),
            Some(g) => {
                let g = obj(g, "grid")?;
                let n = match g.get("n") {
                    None => DEFAULT_GRID_N,
                    Some(v) => v.as_u64().filter(|&n| n >= 3).ok_or_else(|| ModelError::Config {
                        field: "grid.n".into(),
                        message: "must be an integer >= 3".into(),
                    })? as usize,
                };
                let opt = |key: &str| -> Result<Option<f64>, ModelError> {
                    match g.get(key) {
                        None | Some(Value::Null) => Ok(None),
                        Some(v) => number(v, &format!("grid.{key}")).map(Some),
                    }
                };
                (n, opt("alpha_num")?, opt("beta_num")?, opt("eq_tol")?)
            }
        };

        let p = obj(&get(&root, "payoffs", "payoffs")?, "payoffs")?;
        let window = (
            alpha_num.unwrap_or(alpha.max(-100.0)),
            beta_num.unwrap_or(beta.min(100.0)),
        );
        let load = |key: &str, window: (f64, f64)| -> Result<PiecewiseFn, ModelError> {
            piecewise(&get(&p, key, &format!("payoffs.{key}"))?, &format!("payoffs.{key}"), window)
        };
        let mut payoffs = PayoffTriple::new(load("f", window)?, load("g", window)?, load("h", window)?);

        let (lo, hi) = match (alpha_num, beta_num) {
            (Some(a), Some(b)) => (a, b),
            (a, b) => {
                let (ta, tb) = truncate_domain(&payoffs, &mu, &sigma, r, alpha, beta)?;
                let (lo, hi) = (a.unwrap_or(ta), b.unwrap_or(tb));
                payoffs = PayoffTriple::new(load("f", (lo, hi))?, load("g", (lo, hi))?, load("h", (lo, hi))?);
                (lo, hi)
            }
        };
        if !(lo < hi) {
            return Err(ModelError::Config {
                field: "grid".into(),
                message: format!("alpha_num = {lo} must be below beta_num = {hi}"),
            });
        }
        for (key, w) in [("f", &payoffs.f), ("g", &payoffs.g), ("h", &payoffs.h)] {
            if !w.covers(lo, hi) {
                return Err(ModelError::Config {
                    field: format!("payoffs.{key}"),
                    message: format!("pieces do not cover the computational interval [{lo}, {hi}]"),
                });
            }
        }
        let diffusion = DiffusionSpec::new(mu, sigma, r, alpha, beta, uniform_grid(lo, hi, n))?;
        Ok(Problem {
            name,
            diffusion,
            payoffs,
            eq_tol,
        })
    }

    pub fn to_json(&self) -> Value {
        let b = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
        let mut grid = json!({
            "n": self.grid().len(),
            "alpha_num": self.diffusion.lo(),
            "beta_num": self.diffusion.hi(),
        });
        if let Some(t) = self.eq_tol {
            grid["eq_tol"] = json!(t);
        }
        json!({
            "name": self.name,
            "diffusion": {
                "mu": self.diffusion.mu.to_json(),
                "sigma": self.diffusion.sigma.to_json(),
                "r": self.diffusion.r,
                "alpha": b(self.diffusion.alpha),
                "beta": b(self.diffusion.beta),
            },
            "payoffs": {
                "f": self.payoffs.f.to_json(),
                "g": self.payoffs.g.to_json(),
                "h": self.payoffs.h.to_json(),
            },
            "grid": grid,
        })
    }
}

fn number(v: &Value, field: &str) -> Result<f64, ModelError> {
    v.as_f64().ok_or_else(|| ModelError::Config {
        field: field.into(),
        message: format!("expected a number, got {v}"),
    })
}

fn bound(v: Option<&Value>, default: f64, field: &str) -> Result<f64, ModelError> {
    match v {
        None | Some(Value::Null) => Ok(default),
        Some(Value::String(s)) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Some(Value::String(s)) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
        Some(v) => number(v, field),
    }
}

fn piecewise(v: &Value, field: &str, window: (f64, f64)) -> Result<PiecewiseFn, ModelError> {
    let items = v.as_array().ok_or_else(|| ModelError::Config {
        field: field.into(),
        message: "expected an array of {interval, expr} pieces".into(),
    })?;
    let mut pieces = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("{field}[{i}]");
        let iv = item
            .get("interval")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| ModelError::Config {
                field: format!("{path}.interval"),
                message: "expected [a, b] with null for an infinite end".into(),
            })?;
        let a = bound(Some(&iv[0]), f64::NEG_INFINITY, &format!("{path}.interval[0]"))?;
        let b = bound(Some(&iv[1]), f64::INFINITY, &format!("{path}.interval[1]"))?;
        let e = Expr::from_json(
            item.get("expr").ok_or_else(|| ModelError::Config {
                field: format!("{path}.expr"),
                message: "missing".into(),
            })?,
            &format!("{path}.expr"),
        )?;
        pieces.push((a, b, e));
    }
    PiecewiseFn::with_scan_window(pieces, window).map_err(|e| match e {
        ModelError::Config { field: f, message } => ModelError::Config {
            field: format!("{field}.{f}"),
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "name": "kinked",
        "diffusion": {"mu": 0, "sigma": 1, "r": 0.1, "alpha": null, "beta": "inf"},
        "payoffs": {
            "f": [{"interval": [null, null], "expr": {"add": [{"abs": "x"}, 1]}}],
            "g": [{"interval": [null, -1], "expr": {"add": [{"abs": "x"}, 1]}},
                  {"interval": [-1, 1], "expr": {"mul": [2, {"pow": ["x", 2]}]}},
                  {"interval": [1, null], "expr": {"add": [{"abs": "x"}, 1]}}],
            "h": [{"interval": [null, null], "expr": {"add": [{"abs": "x"}, 1]}}]
        },
        "grid": {"n": 601, "alpha_num": -3, "beta_num": 3}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let p = Problem::from_json_str(CONFIG).unwrap();
        assert_eq!(p.grid().len(), 601);
        assert_eq!(p.payoffs.g.eval(0.5), 0.5);
        assert_eq!(p.payoffs.f.kinks().len(), 1);
        let again = Problem::from_json(&p.to_json()).unwrap();
        assert_eq!(again.grid(), p.grid());
        for &x in &[-2.5, -0.3, 0.0, 0.7, 2.9] {
            assert_eq!(again.payoffs.eval(x), p.payoffs.eval(x));
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = CONFIG.replace(r#""r": 0.1"#, r#""r": "fast""#);
        let err = Problem::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("diffusion.r"), "{err}");
        let bad = CONFIG.replace(r#"{"pow": ["x", 2]}"#, r#"{"pow": ["x", 2.5]}"#);
        let err = Problem::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("payoffs.g[1].expr"), "{err}");
        let bad = CONFIG.replace(r#""interval": [-1, 1]"#, r#""interval": [-1, 0.5]"#);
        assert!(Problem::from_json_str(&bad).is_err());
    }

    #[test]
    fn truncation_is_automatic_when_unspecified() {
        let text = CONFIG.replace(r#""alpha_num": -3, "beta_num": 3"#, r#""alpha_num": null"#);
        let p = Problem::from_json_str(&text).unwrap();
        assert!(p.diffusion.lo() < -10.0 && p.diffusion.hi() > 10.0);
    }
}
