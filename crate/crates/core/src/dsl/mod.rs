//! Coefficient expressions.
//!
//! Every coefficient in the toolkit (`p`, `q`, `g`, `a_i`) is either a parsed
//! [`CoefficientExpr`] or a derived callable implementing [`Coefficient`].
//!
//! Grammar (standard precedence, `^` right associative, unary minus binds
//! looser than `^`):
//!
//! ```text
//! top       := expr | "piecewise" "(" expr ("," expr "," expr)+ ")"
//! expr      := term (("+" | "-") term)*
//! term      := unary (("*" | "/") unary)*
//! unary     := ("-" | "+") unary | power
//! power     := primary ("^" unary)?
//! primary   := number | "s" | "r" | "pi" | func "(" expr ")" | "(" expr ")"
//! func      := sin | cos | exp | log | abs
//! ```
//!
//! A piecewise table alternates constant node expressions and branch
//! expressions. Branch `k` owns `[n_k, n_{k+1})`; the last branch also owns
//! its right endpoint.

mod expr;
mod parser;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use expr::{BinOp, Expr, Func};
use parser::{Parsed, Parser};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("piecewise node {index} is invalid: {message}")]
    BadNode { index: usize, message: String },
    #[error("`{text}` is not a constant: {message}")]
    NotConstant { text: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("log of non-positive value {arg} at s = {s}")]
    LogNonPositive { s: f64, arg: f64 },
    #[error("division by zero at s = {s}")]
    DivisionByZero { s: f64 },
    #[error("negative base {base} raised to non-integer power {exponent} at s = {s}")]
    NegativeBase { s: f64, base: f64, exponent: f64 },
    #[error("non-finite value at s = {s}")]
    NonFinite { s: f64 },
    #[error("s = {s} is outside the domain [{lo}, {hi}]")]
    OutsideDomain { s: f64, lo: f64, hi: f64 },
    #[error("evaluation failed at grid index {index}: {source}")]
    AtGridIndex {
        index: usize,
        #[source]
        source: Box<EvalError>,
    },
}

/// A real function of one real variable that may fail with a domain error.
pub trait Coefficient: Send + Sync {
    fn value(&self, s: f64) -> Result<f64, EvalError>;

    /// Points in the open interval `(lo, hi)` where the function changes
    /// definition; quadrature uses them as subdivision seeds.
    fn breakpoints(&self, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }
}

impl<T: Coefficient + ?Sized> Coefficient for &T {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        (**self).value(s)
    }
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        (**self).breakpoints(lo, hi)
    }
}

impl<T: Coefficient + ?Sized> Coefficient for Arc<T> {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        (**self).value(s)
    }
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        (**self).breakpoints(lo, hi)
    }
}

impl<T: Coefficient + ?Sized> Coefficient for Box<T> {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        (**self).value(s)
    }
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        (**self).breakpoints(lo, hi)
    }
}

/// Adapter turning an infallible closure into a [`Coefficient`].
pub struct FnCoefficient<F>(pub F);

impl<F> Coefficient for FnCoefficient<F>
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        let v = (self.0)(s);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { s })
        }
    }
}

pub fn from_fn<F>(f: F) -> Arc<dyn Coefficient>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnCoefficient(f))
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Single(Expr),
    Piecewise { nodes: Vec<Expr>, pieces: Vec<Expr> },
}

/// Parsed, immutable coefficient expression.
///
/// Equality compares syntax trees only, so `parse(print(e)) == e`.
#[derive(Debug, Clone)]
pub struct CoefficientExpr {
    source: String,
    body: Body,
    node_values: Vec<f64>,
}

impl PartialEq for CoefficientExpr {
    fn eq(&self, other: &Self) -> bool {
        self.body == other.body
    }
}

impl CoefficientExpr {
    pub fn parse(source: &str) -> Result<CoefficientExpr, ParseError> {
        Self::parse_with(source, &[])
    }

    /// Parse with named constants substituted as literals.
    pub fn parse_with(source: &str, bindings: &[(&str, f64)]) -> Result<CoefficientExpr, ParseError> {
        if source.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        let parsed = Parser::new(source, bindings)?.parse_top()?;
        let body = match parsed {
            Parsed::Single(e) => Body::Single(e),
            Parsed::Piecewise { nodes, pieces } => Body::Piecewise { nodes, pieces },
        };
        Self::from_body(source.to_string(), body)
    }

    pub fn from_expr(expr: Expr) -> CoefficientExpr {
        let source = expr.to_string();
        CoefficientExpr { source, body: Body::Single(expr), node_values: Vec::new() }
    }

    /// Build a piecewise expression from node expressions and branches.
    pub fn piecewise(nodes: Vec<Expr>, pieces: Vec<Expr>) -> Result<CoefficientExpr, ParseError> {
        if nodes.len() != pieces.len() + 1 || pieces.is_empty() {
            return Err(ParseError::BadNode {
                index: 0,
                message: format!("{} nodes for {} pieces", nodes.len(), pieces.len()),
            });
        }
        let body = Body::Piecewise { nodes, pieces };
        let mut out = Self::from_body(String::new(), body)?;
        out.source = out.to_string();
        Ok(out)
    }

    fn from_body(source: String, body: Body) -> Result<CoefficientExpr, ParseError> {
        let mut node_values = Vec::new();
        if let Body::Piecewise { nodes, .. } = &body {
            for (index, node) in nodes.iter().enumerate() {
                if node.depends_on_var() {
                    return Err(ParseError::BadNode { index, message: "node depends on the variable".into() });
                }
                let v = node
                    .eval(0.0)
                    .map_err(|e| ParseError::BadNode { index, message: e.to_string() })?;
                if let Some(&prev) = node_values.last() {
                    if v <= prev {
                        return Err(ParseError::BadNode { index, message: "nodes must strictly increase".into() });
                    }
                }
                node_values.push(v);
            }
        }
        Ok(CoefficientExpr { source, body, node_values })
    }

    /// Value of a variable-free, non-piecewise expression such as `pi/200`.
    pub fn constant(&self) -> Result<f64, ParseError> {
        let fail = |message: String| ParseError::NotConstant { text: self.source.clone(), message };
        match &self.body {
            Body::Single(e) if !e.depends_on_var() => e.eval(0.0).map_err(|err| fail(err.to_string())),
            Body::Single(_) => Err(fail("depends on the variable".into())),
            Body::Piecewise { .. } => Err(fail("piecewise tables are not constants".into())),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.body, Body::Piecewise { .. })
    }

    /// Declared domain; unbounded for plain expressions.
    pub fn domain(&self) -> (f64, f64) {
        match (self.node_values.first(), self.node_values.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.node_values
    }

    /// Branch expressions of a piecewise table; empty otherwise.
    pub fn pieces(&self) -> &[Expr] {
        match &self.body {
            Body::Single(_) => &[],
            Body::Piecewise { pieces, .. } => pieces,
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64, EvalError> {
        match &self.body {
            Body::Single(e) => e.eval(s),
            Body::Piecewise { pieces, .. } => {
                let nodes = &self.node_values;
                let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
                if !(s >= lo && s <= hi) {
                    return Err(EvalError::OutsideDomain { s, lo, hi });
                }
                // branch k owns [n_k, n_{k+1}); the last one is closed
                let k = nodes.partition_point(|&n| n <= s).saturating_sub(1).min(pieces.len() - 1);
                pieces[k].eval(s)
            }
        }
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Result<Vec<f64>, EvalError> {
        grid.iter()
            .enumerate()
            .map(|(index, &s)| {
                self.eval(s).map_err(|e| EvalError::AtGridIndex { index, source: Box::new(e) })
            })
            .collect()
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            Body::Single(e) => write!(f, "{e}"),
            Body::Piecewise { nodes, pieces } => {
                write!(f, "piecewise(")?;
                for (k, piece) in pieces.iter().enumerate() {
                    write!(f, "{}, {}, ", nodes[k], piece)?;
                }
                write!(f, "{})", nodes[nodes.len() - 1])
            }
        }
    }
}

impl Coefficient for CoefficientExpr {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        self.eval(s)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let start = self.node_values.partition_point(|&n| n <= lo);
        self.node_values[start..].iter().copied().take_while(|&n| n < hi).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn at(src: &str, s: f64) -> f64 {
        CoefficientExpr::parse(src).unwrap().eval(s).unwrap()
    }

    #[test]
    fn closed_forms() {
        assert!((at("sin(s)^2", PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(at("1/s^3", 2.0), 0.125);
        assert_eq!(at("0", 123.0), 0.0);
        assert_eq!(at("exp(-s)", 0.0), 1.0);
        assert!(at("s*sin(s)^2/ (s^2)", PI).abs() < 1e-30);
    }

    #[test]
    fn precedence() {
        assert_eq!(at("-s^2", 3.0), -9.0);
        assert_eq!(at("2^3^2", 0.0), 512.0);
        assert_eq!(at("2^-1", 0.0), 0.5);
        assert_eq!(at("1 - 2 - 3", 0.0), -4.0);
        assert_eq!(at("8/4/2", 0.0), 1.0);
        assert_eq!(at("-2*3 + 4", 0.0), -2.0);
        assert_eq!(at("r + 1", 2.0), 3.0);
        assert_eq!(at("1.5e1 + .5", 0.0), 15.5);
    }

    #[test]
    fn piecewise_branch() {
        let q = CoefficientExpr::parse_with("piecewise(2*pi, c*sin(s)^2, 3*pi)", &[("c", 1.0)]).unwrap();
        assert!((q.eval(2.5 * PI).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(q.domain(), (2.0 * PI, 3.0 * PI));
        assert!(matches!(q.eval(1.0), Err(EvalError::OutsideDomain { .. })));
    }

    #[test]
    fn piecewise_ownership() {
        let q = CoefficientExpr::parse("piecewise(0, 1, 1, 2, 2)").unwrap();
        assert_eq!(q.eval(0.0).unwrap(), 1.0);
        assert_eq!(q.eval(1.0).unwrap(), 2.0);
        // last interval closed
        assert_eq!(q.eval(2.0).unwrap(), 2.0);
        assert_eq!(q.breakpoints(0.0, 2.0), vec![1.0]);
    }

    #[test]
    fn eval_grid_matches_eval() {
        let e = CoefficientExpr::parse("s").unwrap();
        assert_eq!(e.eval_grid(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let e = CoefficientExpr::parse("sin(s)^2").unwrap();
        let v = e.eval_grid(&[0.0, PI / 4.0, PI / 2.0]).unwrap();
        assert!(v[0].abs() < 1e-30 && (v[1] - 0.5).abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-15);
        let e = CoefficientExpr::parse("1/s^3").unwrap();
        let v = e.eval_grid(&[10.0, 20.0]).unwrap();
        assert!((v[0] - 1e-3).abs() < 1e-18 && (v[1] - 1.25e-4).abs() < 1e-19);
    }

    #[test]
    fn errors() {
        assert_eq!(CoefficientExpr::parse("  "), Err(ParseError::Empty));
        assert!(matches!(
            CoefficientExpr::parse("sin(s) + foo"),
            Err(ParseError::UnknownIdentifier { pos: 9, .. })
        ));
        assert!(matches!(CoefficientExpr::parse("(s + 1"), Err(ParseError::Syntax { pos: 6, .. })));
        assert!(matches!(CoefficientExpr::parse("s $ 2"), Err(ParseError::Syntax { pos: 2, .. })));
        assert!(matches!(CoefficientExpr::parse("piecewise(2, s, 1)"), Err(ParseError::BadNode { .. })));
        assert!(matches!(CoefficientExpr::parse("piecewise(s, s, 1)"), Err(ParseError::BadNode { .. })));
        assert!(matches!(CoefficientExpr::parse("1 + piecewise(0, s, 1)"), Err(ParseError::Syntax { .. })));
        let log = CoefficientExpr::parse("log(s)").unwrap();
        assert!(matches!(log.eval(0.0), Err(EvalError::LogNonPositive { .. })));
        let e = CoefficientExpr::parse("1/s").unwrap();
        assert!(matches!(e.eval(0.0), Err(EvalError::DivisionByZero { .. })));
        let e = CoefficientExpr::parse("s^0.5").unwrap();
        assert!(matches!(e.eval(-1.0), Err(EvalError::NegativeBase { .. })));
        let e = CoefficientExpr::parse("exp(s)").unwrap();
        assert!(matches!(e.eval(1000.0), Err(EvalError::NonFinite { .. })));
        let err = e.eval_grid(&[0.0, 1.0, 1000.0]).unwrap_err();
        assert!(matches!(err, EvalError::AtGridIndex { index: 2, .. }));
    }

    #[test]
    fn constants() {
        assert_eq!(CoefficientExpr::parse("pi/200").unwrap().constant().unwrap(), std::f64::consts::PI / 200.0);
        assert!(CoefficientExpr::parse("2*s").unwrap().constant().is_err());
        assert!(CoefficientExpr::parse("log(0)").unwrap().constant().is_err());
    }

    #[test]
    fn print_round_trip_examples() {
        for src in [
            "sin(s)^2",
            "-(s + 1)*2",
            "(s^2)^3",
            "s - (1 - s)",
            "2^-s",
            "--s",
            "exp(-s)/(1 + s^2)",
            "piecewise(2*pi, 1.5*sin(s)^2, 3*pi, -0.9*sin(s)^2, 4*pi)",
        ] {
            let e = CoefficientExpr::parse(src).unwrap();
            let again = CoefficientExpr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }
}
