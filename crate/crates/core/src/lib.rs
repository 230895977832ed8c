//! Numerical toolkit for oscillating-coefficient comparison equations:
//! a coefficient DSL, certified quadrature, the comparison kernels, the
//! lemma checks and example constructions, the radial bridge and the
//! boundary value solver.

pub mod bridge;
pub mod bvp;
pub mod dsl;
pub mod example;
pub mod kernel;
pub mod lemma;
pub mod quadrature;
pub mod rk;
pub mod tridiag;

pub use dsl::{Coefficient, CoefficientExpr, EvalError, ParseError};
pub use quadrature::{IntegralResult, TailModel};
