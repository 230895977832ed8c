//! Radial reduction of `Δu + f(x,u) + g(|x|) x·∇u = 0` on `|x| > R`.
//!
//! With `β(s) = (s/(n-2))^{1/(n-2)}` and `v(x) = h(s)/s` for `|x| = β(s)`,
//!
//! ```text
//! Δv + f + g r v' = (n-2)/(ββ') [h'' + ββ' g(β)(h' - h/s) + ββ' f/(n-2)],
//! ```
//!
//! so `p(s) = ββ' g(β)` and `q(s) = (s/(n-2)) ββ' a(β) = β² a(β)/(n-2)²`
//! turn the PDE into the comparison equation. `ββ' = β^{4-n}/(n-2)²`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Coefficient, EvalError};
use crate::example::ls_slope;
use crate::kernel::{self, KernelError, KernelOptions, KernelPair};
use crate::lemma::{check_hypotheses, Check, HypothesisReport, LemmaError, LemmaOptions, NodeSequence, Verdict};
use crate::quadrature::{self, QuadratureError, TailKind, TailModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("invalid radial problem: {0}")]
    Invalid(String),
    #[error("s = {s} lies below s0 = {s0}")]
    BelowStart { s: f64, s0: f64 },
    #[error("r = {r} lies below beta(s0) = {r0}")]
    BelowStartRadius { r: f64, r0: f64 },
    #[error("g is negative ({value:e}) at r = {r}")]
    NegativeG { r: f64, value: f64 },
    #[error("nonlinearity leaves [a1, a2] at s = {s}: f = {f}, a1 = {a1}, a2 = {a2}")]
    RibbonEscape { s: f64, f: f64, a1: f64, a2: f64 },
    #[error("barrier kernels are sampled on different grids")]
    GridMismatch,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lemma(#[from] LemmaError),
    #[error("lifted {which} coefficient fails the kernel hypotheses: {failed}")]
    Hypotheses { which: &'static str, failed: String },
}

/// The map `β` between the comparison variable `s` and the radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialMap {
    pub n: u32,
    pub r_inner: f64,
    pub s0: f64,
}

impl RadialMap {
    pub fn new(n: u32, r_inner: f64, s0: f64) -> Result<RadialMap, BridgeError> {
        if n < 3 {
            return Err(BridgeError::Invalid(format!("dimension must be at least 3, got {n}")));
        }
        if !(r_inner > 0.0 && r_inner.is_finite()) {
            return Err(BridgeError::Invalid(format!("inner radius must be positive, got {r_inner}")));
        }
        let k = (n - 2) as f64;
        let floor = k * r_inner.powi(n as i32 - 2);
        if !(s0 > floor) {
            return Err(BridgeError::Invalid(format!("s0 = {s0} must exceed (n-2) R^(n-2) = {floor}")));
        }
        Ok(RadialMap { n, r_inner, s0 })
    }

    /// `k = n - 2`.
    pub fn k(&self) -> f64 {
        (self.n - 2) as f64
    }

    /// `β` without the domain check.
    fn radius(&self, s: f64) -> f64 {
        match self.n {
            3 => s,
            4 => (0.5 * s).sqrt(),
            _ => (s / self.k()).powf(1.0 / self.k()),
        }
    }

    /// `β^{-1}` without the domain check.
    fn coordinate(&self, r: f64) -> f64 {
        match self.n {
            3 => r,
            _ => self.k() * r.powi(self.n as i32 - 2),
        }
    }

    pub fn beta(&self, s: f64) -> Result<f64, BridgeError> {
        if s < self.s0 {
            return Err(BridgeError::BelowStart { s, s0: self.s0 });
        }
        Ok(self.radius(s))
    }

    pub fn beta_inverse(&self, r: f64) -> Result<f64, BridgeError> {
        let r0 = self.start_radius();
        if r < r0 {
            return Err(BridgeError::BelowStartRadius { r, r0 });
        }
        Ok(self.coordinate(r))
    }

    pub fn start_radius(&self) -> f64 {
        self.radius(self.s0)
    }

    /// `β'(s) = β^{3-n}/(n-2)²`.
    pub fn beta_prime(&self, s: f64) -> f64 {
        let k = self.k();
        self.radius(s).powi(3 - self.n as i32) / (k * k)
    }

    /// `β(s) β'(s) = β^{4-n}/(n-2)²`.
    pub fn beta_beta_prime(&self, s: f64) -> f64 {
        match self.n {
            3 => s,
            _ => {
                let k = self.k();
                self.radius(s).powi(4 - self.n as i32) / (k * k)
            }
        }
    }
}

/// `p(s) = ββ' g(β(s))`.
pub struct LiftedP {
    pub map: RadialMap,
    pub g: Arc<dyn Coefficient>,
}

impl Coefficient for LiftedP {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        Ok(self.map.beta_beta_prime(s) * self.g.value(self.map.radius(s))?)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = &self.map;
        self.g.breakpoints(m.radius(lo), m.radius(hi)).into_iter().map(|r| m.coordinate(r)).collect()
    }
}

/// `q(s) = β² a(β(s)) / (n-2)²`.
pub struct LiftedQ {
    pub map: RadialMap,
    pub a: Arc<dyn Coefficient>,
}

impl Coefficient for LiftedQ {
    fn value(&self, s: f64) -> Result<f64, EvalError> {
        let r = self.map.radius(s);
        let k = self.map.k();
        Ok(r * r / (k * k) * self.a.value(r)?)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = &self.map;
        self.a.breakpoints(m.radius(lo), m.radius(hi)).into_iter().map(|r| m.coordinate(r)).collect()
    }
}

/// `a(r) = (n-2)² q((n-2) r^{n-2}) / r²` for `r >= β(s0)`, extended by zero
/// on `[R, β(s0))` (`q(s0) = 0` for the oscillating families, so the
/// extension is continuous there).
pub struct PushedA {
    pub map: RadialMap,
    pub q: Arc<dyn Coefficient>,
}

impl Coefficient for PushedA {
    fn value(&self, r: f64) -> Result<f64, EvalError> {
        if r < self.map.start_radius() {
            return Ok(0.0);
        }
        let k = self.map.k();
        let s = self.map.coordinate(r).max(self.map.s0);
        Ok(k * k * self.q.value(s)? / (r * r))
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = &self.map;
        let r0 = m.start_radius();
        let mut out = Vec::new();
        if lo < r0 && r0 < hi {
            out.push(r0);
        }
        let s_lo = m.coordinate(lo.max(r0));
        out.extend(self.q.breakpoints(s_lo, m.coordinate(hi)).into_iter().map(|s| m.radius(s)));
        out
    }
}

pub fn push_a_from_q(q: Arc<dyn Coefficient>, map: RadialMap) -> PushedA {
    PushedA { map, q }
}

/// How `f(x, u)` depends on `u` inside the ribbon `v1 <= u <= v2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f = a1(|x|)`.
    Lower,
    /// `f = a2(|x|)`.
    Upper,
    /// `f = (a1+a2)/2 + ((a2-a1)/2) tanh((u - u_mid)/w)` with `u_mid` the
    /// ribbon midpoint and `w = width_fraction * (v2 - v1)`.
    TanhBlend { width_fraction: f64 },
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::TanhBlend { width_fraction: 0.25 }
    }
}

/// Values of `a1`, `a2` and the ribbon `[v1, v2]` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RibbonPoint {
    pub a1: f64,
    pub a2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl Nonlinearity {
    pub fn value(&self, at: &RibbonPoint, u: f64) -> f64 {
        match *self {
            Nonlinearity::Lower => at.a1,
            Nonlinearity::Upper => at.a2,
            Nonlinearity::TanhBlend { width_fraction } => {
                let mid = 0.5 * (at.a1 + at.a2);
                let half = 0.5 * (at.a2 - at.a1);
                let w = width_fraction * (at.v2 - at.v1);
                if w <= 0.0 {
                    return mid;
                }
                mid + half * ((u - 0.5 * (at.v1 + at.v2)) / w).tanh()
            }
        }
    }

    /// `∂f/∂u`.
    pub fn slope(&self, at: &RibbonPoint, u: f64) -> f64 {
        match *self {
            Nonlinearity::Lower | Nonlinearity::Upper => 0.0,
            Nonlinearity::TanhBlend { width_fraction } => {
                let half = 0.5 * (at.a2 - at.a1);
                let w = width_fraction * (at.v2 - at.v1);
                if w <= 0.0 {
                    return 0.0;
                }
                let c = ((u - 0.5 * (at.v1 + at.v2)) / w).cosh();
                half / (w * c * c)
            }
        }
    }
}

/// PDE data on `|x| > R`, truncated at `s_end` in the comparison variable.
#[derive(Clone)]
pub struct RadialProblem {
    pub map: RadialMap,
    pub s_end: f64,
    pub g: Arc<dyn Coefficient>,
    /// Decay model for `g(r)`; only power tails can be lifted.
    pub g_tail: TailModel,
    pub a1: Arc<dyn Coefficient>,
    pub a2: Arc<dyn Coefficient>,
    pub nonlinearity: Nonlinearity,
    pub varsigma: f64,
}

impl RadialProblem {
    /// Validate and sample `g >= 0` on `[R, β(s_end)]`.
    pub fn new(
        map: RadialMap,
        s_end: f64,
        g: Arc<dyn Coefficient>,
        g_tail: TailModel,
        a1: Arc<dyn Coefficient>,
        a2: Arc<dyn Coefficient>,
        nonlinearity: Nonlinearity,
        varsigma: f64,
    ) -> Result<RadialProblem, BridgeError> {
        if !(s_end > map.s0) {
            return Err(BridgeError::Invalid(format!("s_end = {s_end} must exceed s0 = {}", map.s0)));
        }
        if !(varsigma > 0.0) {
            return Err(BridgeError::Invalid(format!("varsigma must be positive, got {varsigma}")));
        }
        if let Nonlinearity::TanhBlend { width_fraction } = nonlinearity {
            if !(width_fraction > 0.0 && width_fraction.is_finite()) {
                return Err(BridgeError::Invalid(format!("blend width fraction must be positive, got {width_fraction}")));
            }
        }
        let (lo, hi) = (map.r_inner, map.radius(s_end));
        let mut samples: Vec<f64> = (0..=1000).map(|j| lo + (hi - lo) * j as f64 / 1000.0).collect();
        samples.extend(g.breakpoints(lo, hi));
        for r in samples {
            let v = g.value(r)?;
            if v < 0.0 {
                return Err(BridgeError::NegativeG { r, value: v });
            }
        }
        Ok(RadialProblem { map, s_end, g, g_tail, a1, a2, nonlinearity, varsigma })
    }
}

/// Power tail for `p(s) = ββ' g(β)` given `g(r) <= C r^{-ρ}`:
/// `p(s) <= (C/k²) k^{a/k} s^{-a/k}` with `k = n-2`, `a = ρ + n - 4`.
pub fn lift_tail(map: &RadialMap, g_tail: &TailModel) -> Result<TailModel, BridgeError> {
    match g_tail.kind {
        TailKind::Power { exponent, constant } => {
            let k = map.k();
            let a = exponent + map.n as f64 - 4.0;
            Ok(TailModel::power(a / k, constant / (k * k) * k.powf(a / k)))
        }
        _ => Err(BridgeError::Invalid("only power-law tails of g can be lifted".into())),
    }
}

/// Lifted comparison coefficients `(p, q1, q2)` and the tail model of `p`.
pub struct LiftedCoefficients {
    pub p: Arc<dyn Coefficient>,
    pub p_tail: TailModel,
    pub q1: Arc<dyn Coefficient>,
    pub q2: Arc<dyn Coefficient>,
}

pub fn lift_coefficients(problem: &RadialProblem) -> Result<LiftedCoefficients, BridgeError> {
    let map = problem.map;
    Ok(LiftedCoefficients {
        p: Arc::new(LiftedP { map, g: problem.g.clone() }),
        p_tail: lift_tail(&map, &problem.g_tail)?,
        q1: Arc::new(LiftedQ { map, a: problem.a1.clone() }),
        q2: Arc::new(LiftedQ { map, a: problem.a2.clone() }),
    })
}

/// Kernels for `q1 <= q2` on one grid; `v_i = h_i/s` at `|x| = β(s)`.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierPair {
    pub lower: KernelPair,
    pub upper: KernelPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierOrdering {
    pub min_gap: f64,
    pub min_v1: f64,
    pub pass: bool,
}

impl BarrierPair {
    pub fn new(lower: KernelPair, upper: KernelPair) -> Result<BarrierPair, BridgeError> {
        if lower.grid != upper.grid {
            return Err(BridgeError::GridMismatch);
        }
        Ok(BarrierPair { lower, upper })
    }

    pub fn grid(&self) -> &[f64] {
        &self.lower.grid
    }

    pub fn v1(&self) -> Vec<f64> {
        self.lower.h_over_s()
    }

    pub fn v2(&self) -> Vec<f64> {
        self.upper.h_over_s()
    }

    /// Every `stride`-th node, keeping the last one.
    pub fn subsample(&self, stride: usize) -> BarrierPair {
        let pick = |k: &KernelPair| {
            let idx: Vec<usize> = (0..k.grid.len()).step_by(stride.max(1)).collect();
            KernelPair {
                grid: idx.iter().map(|&i| k.grid[i]).collect(),
                z_values: idx.iter().map(|&i| k.z_values[i]).collect(),
                h_values: idx.iter().map(|&i| k.h_values[i]).collect(),
                ..k.clone()
            }
        };
        BarrierPair { lower: pick(&self.lower), upper: pick(&self.upper) }
    }

    /// `v1 <= v2` and `v1 > 0` on every node after `s0`.
    pub fn ordering(&self) -> BarrierOrdering {
        let (v1, v2) = (self.v1(), self.v2());
        let min_gap = v1.iter().zip(&v2).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
        let min_v1 = v1.iter().skip(1).copied().fold(f64::INFINITY, f64::min);
        BarrierOrdering { min_gap, min_v1, pass: min_gap >= -1e-12 && min_v1 > 0.0 }
    }

    /// Ribbon data at node `i`.
    pub fn ribbon_point(&self, problem: &RadialProblem, i: usize) -> Result<RibbonPoint, EvalError> {
        let s = self.grid()[i];
        let r = problem.map.radius(s);
        Ok(RibbonPoint {
            a1: problem.a1.value(r)?,
            a2: problem.a2.value(r)?,
            v1: self.lower.h_values[i] / s,
            v2: self.upper.h_values[i] / s,
        })
    }
}

/// Check the kernel hypotheses for the lifted `(p, q_i)` on `nodes` and
/// build both kernels on `grid`.
pub fn build_barrier(
    problem: &RadialProblem,
    nodes: &NodeSequence,
    lemma_options: [&LemmaOptions; 2],
    grid: &[f64],
    kernel_options: &KernelOptions,
) -> Result<(BarrierPair, [HypothesisReport; 2]), BridgeError> {
    let lifted = lift_coefficients(problem)?;
    let mut kernels = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for ((which, q), opts) in [("lower", &lifted.q1), ("upper", &lifted.q2)].into_iter().zip(lemma_options) {
        let hyp = check_hypotheses(lifted.p.as_ref(), &lifted.p_tail, q.as_ref(), nodes, opts)?;
        if !hyp.all_pass() {
            let failed: Vec<&str> = hyp.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            return Err(BridgeError::Hypotheses { which, failed: failed.join(", ") });
        }
        kernels.push(kernel::build(lifted.p.as_ref(), q.as_ref(), grid, hyp.lambda, Some(hyp.z_sup_bound()), kernel_options)?);
        reports.push(hyp);
    }
    let upper = kernels.pop().expect("two kernels");
    let lower = kernels.pop().expect("two kernels");
    let barrier = BarrierPair::new(lower, upper)?;
    Ok((barrier, reports.try_into().map_err(|_| ()).expect("two reports")))
}

/// Signed residuals of the barriers in the comparison variable.
#[derive(Debug, Clone, Serialize)]
pub struct SubSuperReport {
    pub step: f64,
    pub s: Vec<f64>,
    pub rho_lower: Vec<f64>,
    pub rho_upper: Vec<f64>,
    pub min_rho_lower: f64,
    pub max_rho_upper: f64,
    pub tolerance: f64,
    pub subsolution: bool,
    pub supersolution: bool,
}

/// `F(s, H) = ββ' f(β(s), H/s) / (n-2)`, the nonlinear forcing in the
/// comparison variable (equals `q_i/s` when `f = a_i`).
pub fn forcing(problem: &RadialProblem, at: &RibbonPoint, s: f64, h: f64) -> f64 {
    problem.map.beta_beta_prime(s) / problem.map.k() * problem.nonlinearity.value(at, h / s)
}

/// `ρ_i = h_i'' + p (h_i' - h_i/s) + ββ' f(β, h_i/s)/(n-2)` by central
/// differences on interior nodes. Only the sign is meaningful: the PDE
/// residual is `(n-2)/(ββ')` times `ρ_i`.
pub fn subsuper_residual(barrier: &BarrierPair, problem: &RadialProblem, tolerance: f64) -> Result<SubSuperReport, BridgeError> {
    let grid = barrier.grid();
    if grid.len() < 3 {
        return Err(BridgeError::Invalid("residual needs at least three nodes".into()));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let lifted = lift_coefficients(problem)?;
    let (h1, h2) = (&barrier.lower.h_values, &barrier.upper.h_values);
    let mut report = SubSuperReport {
        step,
        s: Vec::with_capacity(grid.len() - 2),
        rho_lower: Vec::with_capacity(grid.len() - 2),
        rho_upper: Vec::with_capacity(grid.len() - 2),
        min_rho_lower: f64::INFINITY,
        max_rho_upper: f64::NEG_INFINITY,
        tolerance,
        subsolution: false,
        supersolution: false,
    };
    let bracket = |h: &[f64], i: usize, p: f64, f: f64| {
        let s = grid[i];
        let d2 = ((h[i + 1] - h[i]) - (h[i] - h[i - 1])) / (step * step);
        let d1 = (h[i + 1] - h[i - 1]) / (2.0 * step);
        d2 + p * (d1 - h[i] / s) + f
    };
    for i in 1..grid.len() - 1 {
        let s = grid[i];
        let at = barrier.ribbon_point(problem, i)?;
        let p = lifted.p.value(s)?;
        let scale = problem.map.beta_beta_prime(s) / problem.map.k();
        let forcing_at = |u: f64| -> Result<f64, BridgeError> {
            let f = problem.nonlinearity.value(&at, u);
            let guard = 1e-12 * at.a1.abs().max(at.a2.abs()).max(1e-300);
            if f < at.a1 - guard || f > at.a2 + guard {
                return Err(BridgeError::RibbonEscape { s, f, a1: at.a1, a2: at.a2 });
            }
            Ok(scale * f)
        };
        let r1 = bracket(h1, i, p, forcing_at(at.v1)?);
        let r2 = bracket(h2, i, p, forcing_at(at.v2)?);
        report.s.push(s);
        report.rho_lower.push(r1);
        report.rho_upper.push(r2);
        report.min_rho_lower = report.min_rho_lower.min(r1);
        report.max_rho_upper = report.max_rho_upper.max(r2);
    }
    report.subsolution = report.min_rho_lower >= -tolerance;
    report.supersolution = report.max_rho_upper <= tolerance;
    Ok(report)
}

/// Both sides of the transformation identity at `s`, for `v(x) = h(s)/s`:
/// the radial operator `v'' + (n-1)v'/r + f + g r v'` and
/// `(n-2)/(ββ') [h'' + ββ' g (h' - h/s) + ββ' f/(n-2)]`, each by central
/// differences with steps `rel_step·r` and `rel_step·s`.
pub fn transformation_sides(
    map: &RadialMap,
    g: &dyn Coefficient,
    f: impl Fn(f64, f64) -> f64,
    h: impl Fn(f64) -> f64,
    s: f64,
    rel_step: f64,
) -> Result<(f64, f64), BridgeError> {
    let r = map.beta(s)?;
    let step = rel_step * r;
    let v = |r: f64| {
        let s = map.coordinate(r);
        h(s) / s
    };
    let dv = (v(r + step) - v(r - step)) / (2.0 * step);
    let d2v = (v(r + step) - 2.0 * v(r) + v(r - step)) / (step * step);
    let n = map.n as f64;
    let gr = g.value(r)?;
    let vr = v(r);
    let radial = d2v + (n - 1.0) / r * dv + f(r, vr) + gr * r * dv;

    let step = rel_step * s;
    let dh = (h(s + step) - h(s - step)) / (2.0 * step);
    let d2h = (h(s + step) - 2.0 * h(s) + h(s - step)) / (step * step);
    let bb = map.beta_beta_prime(s);
    let k = map.k();
    let comparison = k / bb * (d2h + bb * gr * (dh - h(s) / s) + bb * f(r, h(s) / s) / k);
    Ok((radial, comparison))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope against `ln T`.
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_bounds: Vec<f64>,
    pub cauchy_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// `∫_R^∞ r^{n-1} g` (finite part) and its uncertainty.
    pub g_moment: f64,
    pub g_moment_uncertainty: f64,
    /// `∫_{s0}^∞ s p(s) ds`.
    pub s_moment: f64,
    /// `(n-2) ∫_{β(s0)}^∞ r^{n-1} g`, which must equal `s_moment`.
    pub lifted_moment: f64,
    pub moment_identity_gap: f64,
    pub growth: [GrowthTable; 2],
    pub weighted: [WeightedTable; 2],
    pub checks: Vec<Check>,
}

fn moment_of_g(problem: &RadialProblem, from: f64, tol: f64) -> Result<quadrature::IntegralResult, BridgeError> {
    let n = problem.map.n as i32;
    let model = match problem.g_tail.kind {
        TailKind::Power { exponent, constant } => TailModel::power(exponent - (n - 1) as f64, constant),
        _ => return Err(BridgeError::Invalid("only power-law tails of g are supported".into())),
    };
    let g = &problem.g;
    let f = |r: f64| g.value(r).map(|v| r.powi(n - 1) * v);
    let seeds = g.breakpoints(from, f64::INFINITY);
    Ok(quadrature::integrate_tail(f, from, &model, &seeds, tol)?)
}

/// Integral conditions on `(g, a1, a2)`: finiteness of `∫ r^{n-1} g` with
/// its lifted identity, unbounded growth of `∫_R^T r|a_i|` over `radii`,
/// and Cauchy stability of `∫_R^T r^{1-ς(n-2)}|a_i|` under doubling of `T`
/// within `(n-2)^{1+ς} ‖q_i‖_∞ s_T^{-ς}/ς`, where `forcing_bounds` are the
/// sup bounds of `q_1`, `q_2`.
pub fn integral_conditions(
    problem: &RadialProblem,
    radii: &[f64],
    forcing_bounds: [f64; 2],
    tol: f64,
) -> Result<ConditionReport, BridgeError> {
    let map = &problem.map;
    let r_inner = map.r_inner;
    if radii.len() < 2 || radii.iter().any(|&t| !(t > r_inner)) {
        return Err(BridgeError::Invalid("need at least two radii beyond R".into()));
    }
    let g_full = moment_of_g(problem, r_inner, tol)?;
    let lifted_tail = moment_of_g(problem, map.start_radius(), tol)?;
    let lifted_moment = map.k() * lifted_tail.value;

    let p = LiftedP { map: *map, g: problem.g.clone() };
    let p_tail = lift_tail(map, &problem.g_tail)?;
    let s_model = match p_tail.kind {
        TailKind::Power { exponent, constant } => TailModel::power(exponent - 1.0, constant),
        _ => unreachable!("lift_tail returns power models"),
    };
    let s_res = quadrature::integrate_tail(
        |s: f64| p.value(s).map(|v| s * v),
        map.s0,
        &s_model,
        &p.breakpoints(map.s0, f64::INFINITY),
        tol,
    )?;
    let moment_identity_gap = (s_res.value - lifted_moment).abs();
    let identity_tol = s_res.total_uncertainty() + map.k() * lifted_tail.total_uncertainty() + tol;

    let k = map.k();
    let sorted = {
        let mut r = radii.to_vec();
        r.sort_by(f64::total_cmp);
        r
    };
    let r_max = sorted[sorted.len() - 1];
    let mut halvings = vec![r_max];
    while halvings.len() < 5 && halvings[halvings.len() - 1] * 0.5 > r_inner {
        let next = halvings[halvings.len() - 1] * 0.5;
        halvings.push(next);
    }
    halvings.reverse();

    let mut growth = Vec::new();
    let mut weighted = Vec::new();
    for (a, bound) in [(&problem.a1, forcing_bounds[0]), (&problem.a2, forcing_bounds[1])] {
        let plain = |r: f64| a.value(r).map(|v| r * v.abs());
        let values = cumulative_at(&plain, a.as_ref(), r_inner, &sorted, tol)?;
        let ln_t: Vec<f64> = sorted.iter().map(|t| t.ln()).collect();
        growth.push(GrowthTable { radii: sorted.clone(), slope: ls_slope(&ln_t, &values), values });

        let exponent = 1.0 - problem.varsigma * k;
        let damped = |r: f64| a.value(r).map(|v| r.powf(exponent) * v.abs());
        let values = cumulative_at(&damped, a.as_ref(), r_inner, &halvings, tol)?;
        let tail_bounds: Vec<f64> = halvings
            .iter()
            .map(|&t| {
                let s_t = map.coordinate(t);
                k.powf(1.0 + problem.varsigma) * bound * s_t.powf(-problem.varsigma) / problem.varsigma
            })
            .collect();
        let cauchy_margin = values
            .windows(2)
            .zip(&tail_bounds)
            .map(|(w, b)| b - (w[1] - w[0]).abs())
            .fold(f64::INFINITY, f64::min);
        weighted.push(WeightedTable { radii: halvings.clone(), values, tail_bounds, cauchy_margin });
    }
    let mut checks = vec![
        Check::new(
            "g_moment_finite",
            if g_full.value.is_finite() && g_full.tail_bound.is_finite() { Verdict::Pass } else { Verdict::Fail },
            g_full.value,
            format!("∫ r^(n-1) g = {:.6e} ± {:.1e}", g_full.value, g_full.total_uncertainty()),
        ),
        Check::new(
            "lift_moment_identity",
            Verdict::nonnegative(identity_tol - moment_identity_gap),
            identity_tol - moment_identity_gap,
            format!("∫ s p ds = {:.6e} vs (n-2) ∫ r^(n-1) g dr = {lifted_moment:.6e}", s_res.value),
        ),
    ];
    for (i, (gt, wt)) in growth.iter().zip(&weighted).enumerate() {
        checks.push(Check::new(
            &format!("a{}_growth_unbounded", i + 1),
            Verdict::strictly_positive(gt.slope),
            gt.slope,
            "slope of ∫_R^T r|a| dr against ln T",
        ));
        checks.push(Check::new(
            &format!("a{}_weighted_cauchy", i + 1),
            Verdict::nonnegative(wt.cauchy_margin),
            if wt.cauchy_margin.is_finite() { wt.cauchy_margin } else { 0.0 },
            format!("varsigma = {}", problem.varsigma),
        ));
    }
    let growth: [GrowthTable; 2] = growth.try_into().expect("two tables");
    let weighted: [WeightedTable; 2] = weighted.try_into().expect("two tables");
    Ok(ConditionReport {
        g_moment: g_full.value,
        g_moment_uncertainty: g_full.total_uncertainty(),
        s_moment: s_res.value,
        lifted_moment,
        moment_identity_gap,
        growth,
        weighted,
        checks,
    })
}

/// `∫_lo^{t} f` at each (sorted) `t`, seeded at the coefficient's breakpoints.
fn cumulative_at(
    f: &(impl Fn(f64) -> Result<f64, EvalError> + Sync),
    coefficient: &dyn Coefficient,
    lo: f64,
    points: &[f64],
    tol: f64,
) -> Result<Vec<f64>, BridgeError> {
    let mut grid = vec![lo];
    grid.extend_from_slice(points);
    let hi = points[points.len() - 1];
    let prefix = quadrature::cumulative_integral(f, &grid, &coefficient.breakpoints(lo, hi), tol)?;
    Ok(prefix[1..].to_vec())
}
