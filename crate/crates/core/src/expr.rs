//! Symbolic scalar expressions in one variable.
//!
//! Payoffs and coefficients are described as small atom trees (polynomial,
//! `abs`, `exp`, `sqrt`) so that first and second derivatives, and the
//! one-sided slopes at kinks, are exact rather than numerically differenced.

use std::fmt;
use std::ops;

use serde_json::{json, Value};

use crate::error::ModelError;

/// Which side of a point a one-sided derivative is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
    Abs(Box<Expr>),
    /// Derivative of `abs`; never parsed from config.
    Sign(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn x() -> Expr {
        Expr::X
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::Powi(Box::new(self), n)
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_side(x, Side::Center)
    }

    /// Evaluates with `sign` atoms resolved on the requested side of `x`.
    pub fn eval_side(&self, x: f64, side: Side) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Add(terms) => terms.iter().map(|t| t.eval_side(x, side)).sum(),
            Expr::Mul(terms) => terms.iter().map(|t| t.eval_side(x, side)).product(),
            Expr::Neg(e) => -e.eval_side(x, side),
            Expr::Div(a, b) => a.eval_side(x, side) / b.eval_side(x, side),
            Expr::Powi(e, n) => e.eval_side(x, side).powi(*n),
            Expr::Abs(e) => e.eval_side(x, side).abs(),
            Expr::Sign(e) => {
                let probe = match side {
                    Side::Center => x,
                    Side::Left => x - 1e-9 * (1.0 + x.abs()),
                    Side::Right => x + 1e-9 * (1.0 + x.abs()),
                };
                let u = e.eval(probe);
                if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Expr::Exp(e) => e.eval_side(x, side).exp(),
            Expr::Sqrt(e) => e.eval_side(x, side).sqrt(),
        }
    }

    pub fn derivative(&self) -> Expr {
        let d = match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::X => Expr::Const(1.0),
            Expr::Add(terms) => Expr::Add(terms.iter().map(Expr::derivative).collect()),
            Expr::Mul(terms) => {
                let mut sum = Vec::with_capacity(terms.len());
                for i in 0..terms.len() {
                    let mut prod = Vec::with_capacity(terms.len());
                    for (j, t) in terms.iter().enumerate() {
                        prod.push(if i == j { t.derivative() } else { t.clone() });
                    }
                    sum.push(Expr::Mul(prod));
                }
                Expr::Add(sum)
            }
            Expr::Neg(e) => Expr::Neg(Box::new(e.derivative())),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = Expr::Add(vec![
                    Expr::Mul(vec![a.derivative(), (**b).clone()]),
                    Expr::Neg(Box::new(Expr::Mul(vec![(**a).clone(), b.derivative()]))),
                ]);
                Expr::Div(Box::new(num), Box::new(Expr::Powi(b.clone(), 2)))
            }
            Expr::Powi(e, n) => {
                if *n == 0 {
                    Expr::Const(0.0)
                } else {
                    Expr::Mul(vec![
                        Expr::Const(*n as f64),
                        Expr::Powi(e.clone(), n - 1),
                        e.derivative(),
                    ])
                }
            }
            Expr::Abs(e) => Expr::Mul(vec![Expr::Sign(e.clone()), e.derivative()]),
            Expr::Sign(_) => Expr::Const(0.0),
            Expr::Exp(e) => Expr::Mul(vec![self.clone(), e.derivative()]),
            Expr::Sqrt(e) => Expr::Div(
                Box::new(e.derivative()),
                Box::new(Expr::Mul(vec![Expr::Const(2.0), self.clone()])),
            ),
        };
        d.simplify()
    }

    /// Constant folding and removal of neutral elements.
    pub fn simplify(self) -> Expr {
        match self {
            Expr::Add(terms) => {
                let mut konst = 0.0;
                let mut rest = Vec::new();
                for t in terms.into_iter().map(Expr::simplify) {
                    match t {
                        Expr::Const(c) => konst += c,
                        Expr::Add(inner) => rest.extend(inner),
                        other => rest.push(other),
                    }
                }
                if konst != 0.0 || rest.is_empty() {
                    rest.push(Expr::Const(konst));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Add(rest)
                }
            }
            Expr::Mul(terms) => {
                let mut konst = 1.0;
                let mut rest = Vec::new();
                for t in terms.into_iter().map(Expr::simplify) {
                    match t {
                        Expr::Const(c) => konst *= c,
                        Expr::Mul(inner) => rest.extend(inner),
                        other => rest.push(other),
                    }
                }
                if konst == 0.0 {
                    return Expr::Const(0.0);
                }
                if konst != 1.0 || rest.is_empty() {
                    rest.insert(0, Expr::Const(konst));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Mul(rest)
                }
            }
            Expr::Neg(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => *inner,
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Div(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x / y),
                (Expr::Const(x), _) if x == 0.0 => Expr::Const(0.0),
                (a, Expr::Const(y)) if y == 1.0 => a,
                (a, b) => Expr::Div(Box::new(a), Box::new(b)),
            },
            Expr::Powi(e, n) => match (e.simplify(), n) {
                (_, 0) => Expr::Const(1.0),
                (e, 1) => e,
                (Expr::Const(c), n) => Expr::Const(c.powi(n)),
                (e, n) => Expr::Powi(Box::new(e), n),
            },
            Expr::Abs(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.abs()),
                other => Expr::Abs(Box::new(other)),
            },
            Expr::Sign(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(if c > 0.0 {
                    1.0
                } else if c < 0.0 {
                    -1.0
                } else {
                    0.0
                }),
                other => Expr::Sign(Box::new(other)),
            },
            Expr::Exp(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.exp()),
                other => Expr::Exp(Box::new(other)),
            },
            Expr::Sqrt(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.sqrt()),
                other => Expr::Sqrt(Box::new(other)),
            },
            other => other,
        }
    }

    /// Arguments of every `abs` atom, i.e. the candidate kink generators.
    pub fn abs_arguments(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.collect_abs(&mut out);
        out
    }

    fn collect_abs<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        match self {
            Expr::Const(_) | Expr::X => {}
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| t.collect_abs(out)),
            Expr::Div(a, b) => {
                a.collect_abs(out);
                b.collect_abs(out);
            }
            Expr::Abs(e) => {
                out.push(e);
                e.collect_abs(out);
            }
            Expr::Neg(e) | Expr::Powi(e, _) | Expr::Sign(e) | Expr::Exp(e) | Expr::Sqrt(e) => {
                e.collect_abs(out)
            }
        }
    }

    /// Parses the config atom-tree form.
    ///
    /// Accepted shapes: a number, the string `"x"`, or a single-key object
    /// `{"add": [..]}`, `{"mul": [..]}`, `{"sub": [a, b]}`, `{"div": [a, b]}`,
    /// `{"neg": e}`, `{"pow": [e, n]}`, `{"abs": e}`, `{"exp": e}`, `{"sqrt": e}`.
    pub fn from_json(v: &Value, path: &str) -> Result<Expr, ModelError> {
        let bad = |msg: &str| ModelError::Config {
            field: path.to_string(),
            message: msg.to_string(),
        };
        match v {
            Value::Number(n) => n
                .as_f64()
                .map(Expr::Const)
                .ok_or_else(|| bad("number is not representable as f64")),
            Value::String(s) if s == "x" => Ok(Expr::X),
            Value::String(s) => Err(bad(&format!("unknown symbol {s:?}; only \"x\" is allowed"))),
            Value::Object(map) => {
                if map.len() != 1 {
                    return Err(bad("expression object must have exactly one key"));
                }
                let (op, arg) = map.iter().next().unwrap();
                let sub = |i: usize, a: &Value| Expr::from_json(a, &format!("{path}.{op}[{i}]"));
                let list = |a: &Value| -> Result<Vec<Expr>, ModelError> {
                    a.as_array()
                        .ok_or_else(|| bad(&format!("{op} expects an array")))?
                        .iter()
                        .enumerate()
                        .map(|(i, e)| sub(i, e))
                        .collect()
                };
                let pair = |a: &Value| -> Result<(Expr, Expr), ModelError> {
                    let mut items = list(a)?;
                    if items.len() != 2 {
                        return Err(bad(&format!("{op} expects exactly two operands")));
                    }
                    let b = items.pop().unwrap();
                    Ok((items.pop().unwrap(), b))
                };
                let unary = |a: &Value| Expr::from_json(a, &format!("{path}.{op}"));
                match op.as_str() {
                    "add" => Ok(Expr::Add(list(arg)?)),
                    "mul" => Ok(Expr::Mul(list(arg)?)),
                    "sub" => {
                        let (a, b) = pair(arg)?;
                        Ok(a - b)
                    }
                    "div" => {
                        let (a, b) = pair(arg)?;
                        Ok(Expr::Div(Box::new(a), Box::new(b)))
                    }
                    "neg" => Ok(Expr::Neg(Box::new(unary(arg)?))),
                    "abs" => Ok(unary(arg)?.abs()),
                    "exp" => Ok(unary(arg)?.exp()),
                    "sqrt" => Ok(unary(arg)?.sqrt()),
                    "pow" => {
                        let items = arg
                            .as_array()
                            .filter(|a| a.len() == 2)
                            .ok_or_else(|| bad("pow expects [base, integer exponent]"))?;
                        let base = Expr::from_json(&items[0], &format!("{path}.pow[0]"))?;
                        let n = items[1]
                            .as_i64()
                            .filter(|n| n.unsigned_abs() <= i32::MAX as u64)
                            .ok_or_else(|| bad("pow exponent must be an integer"))?;
                        Ok(base.powi(n as i32))
                    }
                    other => Err(bad(&format!("unknown operator {other:?}"))),
                }
            }
            _ => Err(bad("expected a number, \"x\" or an operator object")),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Expr::Const(c) => json!(c),
            Expr::X => json!("x"),
            Expr::Add(ts) => json!({ "add": ts.iter().map(Expr::to_json).collect::<Vec<_>>() }),
            Expr::Mul(ts) => json!({ "mul": ts.iter().map(Expr::to_json).collect::<Vec<_>>() }),
            Expr::Neg(e) => json!({ "neg": e.to_json() }),
            Expr::Div(a, b) => json!({ "div": [a.to_json(), b.to_json()] }),
            Expr::Powi(e, n) => json!({ "pow": [e.to_json(), n] }),
            Expr::Abs(e) => json!({ "abs": e.to_json() }),
            // sign only appears in derivatives; serialize as abs(e)/e
            Expr::Sign(e) => json!({ "div": [{ "abs": e.to_json() }, e.to_json()] }),
            Expr::Exp(e) => json!({ "exp": e.to_json() }),
            Expr::Sqrt(e) => json!({ "sqrt": e.to_json() }),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, ts: &[Expr], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, t) in ts.iter().enumerate() {
                if i > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{t}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Add(ts) => join(f, ts, " + "),
            Expr::Mul(ts) => join(f, ts, "*"),
            Expr::Neg(e) => write!(f, "-{e}"),
            Expr::Div(a, b) => write!(f, "({a})/({b})"),
            Expr::Powi(e, n) => write!(f, "{e}^{n}"),
            Expr::Abs(e) => write!(f, "|{e}|"),
            Expr::Sign(e) => write!(f, "sgn({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
            Expr::Sqrt(e) => write!(f, "sqrt({e})"),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, rhs])
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, Expr::Neg(Box::new(rhs))])
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(vec![self, rhs])
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl ops::Add<f64> for Expr {
    type Output = Expr;
    fn add(self, rhs: f64) -> Expr {
        self + Expr::Const(rhs)
    }
}

impl ops::Sub<f64> for Expr {
    type Output = Expr;
    fn sub(self, rhs: f64) -> Expr {
        self + Expr::Const(-rhs)
    }
}

impl ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Const(self) * rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let e = Expr::x().powi(3) - 2.0 * Expr::x() + 1.0;
        let d1 = e.derivative();
        let d2 = d1.derivative();
        assert_eq!(d1.eval(2.0), 10.0);
        assert_eq!(d2.eval(2.0), 12.0);
    }

    #[test]
    fn abs_one_sided_slopes() {
        let e = Expr::x().abs() + 1.0;
        let d = e.derivative();
        assert_eq!(d.eval_side(0.0, Side::Left), -1.0);
        assert_eq!(d.eval_side(0.0, Side::Right), 1.0);
        assert_eq!(d.eval(0.5), 1.0);
    }

    #[test]
    fn exp_and_sqrt_chain_rule() {
        let e = (2.0 * Expr::x()).exp();
        assert!((e.derivative().eval(0.3) - 2.0 * (0.6f64).exp()).abs() < 1e-14);
        let s = (Expr::x() + 1.0).sqrt();
        assert!((s.derivative().eval(3.0) - 0.25).abs() < 1e-15);
        let q = Expr::x() / (Expr::x() + 1.0);
        assert!((q.derivative().eval(1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let v: Value = serde_json::from_str(
            r#"{"add": [{"pow": ["x", 2]}, {"abs": {"sub": ["x", 1]}}, 3]}"#,
        )
        .unwrap();
        let e = Expr::from_json(&v, "f").unwrap();
        assert_eq!(e.eval(-1.0), 1.0 + 2.0 + 3.0);
        let back = Expr::from_json(&e.to_json(), "f").unwrap();
        assert_eq!(back.eval(0.25), e.eval(0.25));

        let err = Expr::from_json(&serde_json::json!({"log": "x"}), "payoffs.f[0].expr");
        assert!(matches!(err, Err(ModelError::Config { ref field, .. }) if field == "payoffs.f[0].expr"));
        assert!(Expr::from_json(&serde_json::json!("y"), "f").is_err());
        assert!(Expr::from_json(&serde_json::json!({"pow": ["x", 1.5]}), "f").is_err());
    }
}
