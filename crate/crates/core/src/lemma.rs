//! Numerical verification of the sign/summability hypotheses on `(p, q)`
//! that make the comparison kernel `z` negative and bounded, of the
//! resulting conclusions on sampled kernels, and of the extra summability
//! condition on `p` needed when the negative lobes are bounded below.
//!
//! Every check carries a margin. Strict inequalities pass only with margin
//! beyond [`STRICT_THRESHOLD`]; margins inside the threshold are reported
//! as inconclusive.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Coefficient, EvalError};
use crate::kernel::KernelPair;
use crate::quadrature::{self, IntegralResult, QuadratureError, TailModel};

pub const STRICT_THRESHOLD: f64 = 1e-12;
pub const SIGN_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LemmaError {
    #[error("node sequence: {0}")]
    Nodes(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("kernel grid starts at {grid_start}, nodes start at {node_start}")]
    GridMismatch { grid_start: f64, node_start: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// `value < 0` with room to spare.
    pub fn strictly_negative(value: f64) -> Verdict {
        if value < -STRICT_THRESHOLD {
            Verdict::Pass
        } else if value < 0.0 {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    }

    /// `margin > 0` with room to spare.
    pub fn strictly_positive(margin: f64) -> Verdict {
        Verdict::strictly_negative(-margin)
    }

    /// `margin >= 0` up to rounding.
    pub fn nonnegative(margin: f64) -> Verdict {
        if margin >= -STRICT_THRESHOLD {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One named inequality with its margin (positive is good).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub details: String,
    #[serde(skip)]
    pub verdict: Verdict,
}

impl Check {
    pub fn new(name: &str, verdict: Verdict, margin: f64, details: impl Into<String>) -> Check {
        let mut details = details.into();
        if verdict == Verdict::Inconclusive {
            details = format!("inconclusive: {details}");
        }
        Check { name: name.to_string(), pass: verdict == Verdict::Pass, margin, details, verdict }
    }
}

/// Nodes `a_2 < a_3 < ... < a_{2M+2}` covering `M` periods; `a_2 = s0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSequence {
    nodes: Vec<f64>,
}

impl NodeSequence {
    /// `values[k]` is `a_{k+2}`; the length must be odd and at least five.
    pub fn new(values: Vec<f64>) -> Result<NodeSequence, LemmaError> {
        if values.len() < 5 || values.len() % 2 == 0 {
            return Err(LemmaError::Nodes(format!(
                "need a_2, ..., a_(2M+2) with M >= 2 (odd count >= 5), got {} nodes",
                values.len()
            )));
        }
        for (k, w) in values.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(LemmaError::Nodes(format!("not increasing at a_{} = {}", k + 3, w[1])));
            }
        }
        Ok(NodeSequence { nodes: values })
    }

    /// `a_m = mπ` for `m = 2, ..., 2M+2`.
    pub fn multiples_of_pi(periods: usize) -> Result<NodeSequence, LemmaError> {
        NodeSequence::new((2..=2 * periods + 2).map(|m| m as f64 * std::f64::consts::PI).collect())
    }

    pub fn periods(&self) -> usize {
        (self.nodes.len() - 1) / 2
    }

    /// `a_index`, for `2 <= index <= 2M+2`.
    pub fn a(&self, index: usize) -> f64 {
        self.nodes[index - 2]
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.nodes
    }

    /// `(a_{2m}, a_{2m+1})`, `m >= 1`.
    pub fn positive_lobe(&self, m: usize) -> (f64, f64) {
        (self.a(2 * m), self.a(2 * m + 1))
    }

    /// `(a_{2m+1}, a_{2m+2})`, `m >= 1`.
    pub fn negative_lobe(&self, m: usize) -> (f64, f64) {
        (self.a(2 * m + 1), self.a(2 * m + 2))
    }

    /// `inf_m (a_{2m+2} - a_{2m})` over the covered periods.
    pub fn min_period(&self) -> f64 {
        (1..=self.periods()).map(|m| self.a(2 * m + 2) - self.a(2 * m)).fold(f64::INFINITY, f64::min)
    }
}

/// How `ε_m` is chosen from the lobe integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonStrategy {
    /// `ε_m = max(0, ∫q⁺ - ∫|q⁻|)`, the smallest admissible value.
    #[default]
    Slack,
    /// `ε_m = ∫q⁺`, suited to integrable `q`.
    PositiveLobe,
}

#[derive(Debug, Clone)]
pub struct LemmaOptions {
    pub finite_tol: f64,
    pub tail_tol: f64,
    pub strategy: EpsilonStrategy,
    /// Certified bound on `Σ_{m>M} ε_m`, when the caller can supply one.
    pub epsilon_remainder: Option<f64>,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        LemmaOptions {
            finite_tol: quadrature::DEFAULT_FINITE_TOL,
            tail_tol: quadrature::DEFAULT_TAIL_TOL,
            strategy: EpsilonStrategy::Slack,
            epsilon_remainder: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub periods: usize,
    pub lambda: f64,
    /// `λ` plus its quadrature error estimate and tail bound.
    pub lambda_upper: f64,
    pub lambda_ok: bool,
    pub sign_pattern_ok: Vec<bool>,
    /// `∫_{a_{2m}}^{a_{2m+1}} q`.
    pub positive_lobes: Vec<f64>,
    /// `∫_{a_{2m+1}}^{a_{2m+2}} |q|`.
    pub negative_lobes: Vec<f64>,
    /// `∫_{a_{2m}}^∞ p`.
    pub p_tails: Vec<f64>,
    /// Positive lobe minus `(1 + 3∫_{a_{2m}}^∞ p)` times the negative lobe.
    pub hyp1_margins: Vec<f64>,
    pub hyp2_epsilons: Vec<f64>,
    pub hyp2_margins: Vec<f64>,
    pub strategy: EpsilonStrategy,
    pub epsilon_partial: f64,
    pub epsilon_remainder: Option<f64>,
    pub epsilon_sum: f64,
    pub delta: f64,
    pub checks: Vec<Check>,
}

impl HypothesisReport {
    /// The bound `(ε + δ) e^λ` on `|z|`.
    pub fn z_sup_bound(&self) -> f64 {
        (self.epsilon_sum + self.delta) * self.lambda_upper.exp()
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct LobeData {
    positive: f64,
    negative: f64,
    sign_margin: f64,
}

fn lobe_data<Q: Coefficient + ?Sized>(q: &Q, nodes: &NodeSequence, m: usize, tol: f64) -> Result<LobeData, LemmaError> {
    let (a, b) = nodes.positive_lobe(m);
    let (c, d) = nodes.negative_lobe(m);
    let qf = |s: f64| q.value(s);
    let positive = quadrature::integrate_seeded(qf, a, b, &q.breakpoints(a, b), tol)?.value;
    let negative = quadrature::integrate_seeded(|s| q.value(s).map(f64::abs), c, d, &q.breakpoints(c, d), tol)?.value;
    let mut sign_margin = f64::INFINITY;
    for j in 1..=SIGN_SAMPLES {
        let t = j as f64 / (SIGN_SAMPLES + 1) as f64;
        sign_margin = sign_margin.min(q.value(a + t * (b - a))?);
        sign_margin = sign_margin.min(-q.value(c + t * (d - c))?);
    }
    Ok(LobeData { positive, negative, sign_margin })
}

/// `∫_{a_{2m}}^∞ p` for `m = 1..=M+1`, plus `λ = ∫_{s0}^∞ p` as a full result.
pub fn p_tail_integrals<P: Coefficient + ?Sized>(
    p: &P,
    p_tail: &TailModel,
    nodes: &NodeSequence,
    opts: &LemmaOptions,
) -> Result<(Vec<f64>, IntegralResult), LemmaError> {
    let pf = |s: f64| p.value(s);
    let grid = nodes.as_slice();
    let prefix = quadrature::cumulative_integral(pf, grid, &p.breakpoints(nodes.start(), nodes.end()), opts.finite_tol)?;
    let far = quadrature::integrate_tail(pf, nodes.end(), p_tail, &[], opts.tail_tol)?;
    let total = prefix[prefix.len() - 1] + far.value;
    let tails = (1..=nodes.periods() + 1).map(|m| total - prefix[2 * m - 2]).collect();
    let lambda = IntegralResult {
        value: total,
        abs_error_estimate: far.abs_error_estimate + opts.finite_tol,
        tail_bound: far.tail_bound,
        evaluations: far.evaluations,
    };
    Ok((tails, lambda))
}

/// Hypotheses on `(p, q)` over the periods covered by `nodes`.
pub fn check_hypotheses<P, Q>(
    p: &P,
    p_tail: &TailModel,
    q: &Q,
    nodes: &NodeSequence,
    opts: &LemmaOptions,
) -> Result<HypothesisReport, LemmaError>
where
    P: Coefficient + ?Sized,
    Q: Coefficient + ?Sized,
{
    let periods = nodes.periods();
    let (tails, lambda_res) = p_tail_integrals(p, p_tail, nodes, opts)?;
    let lobes: Vec<LobeData> =
        (1..=periods).into_par_iter().map(|m| lobe_data(q, nodes, m, opts.finite_tol)).collect::<Result<_, _>>()?;

    let lambda = lambda_res.value;
    let lambda_upper = lambda + lambda_res.total_uncertainty();
    let positive_lobes: Vec<f64> = lobes.iter().map(|l| l.positive).collect();
    let negative_lobes: Vec<f64> = lobes.iter().map(|l| l.negative).collect();
    let hyp1_margins: Vec<f64> =
        lobes.iter().zip(&tails).map(|(l, t)| l.positive - (1.0 + 3.0 * t) * l.negative).collect();
    let hyp2_epsilons: Vec<f64> = lobes
        .iter()
        .map(|l| match opts.strategy {
            EpsilonStrategy::Slack => (l.positive - l.negative).max(0.0),
            EpsilonStrategy::PositiveLobe => l.positive,
        })
        .collect();
    let hyp2_margins: Vec<f64> =
        lobes.iter().zip(&hyp2_epsilons).map(|(l, e)| e + l.negative - l.positive).collect();
    let epsilon_partial: f64 = hyp2_epsilons.iter().sum();
    let epsilon_sum = epsilon_partial + opts.epsilon_remainder.unwrap_or(0.0);
    let delta = positive_lobes.iter().copied().fold(0.0, f64::max);
    let sign_pattern: Vec<Verdict> = lobes.iter().map(|l| Verdict::strictly_positive(l.sign_margin)).collect();

    let mut checks = Vec::new();
    let lambda_margin = 1.0 - lambda_upper;
    checks.push(Check::new(
        "lambda_below_one",
        Verdict::strictly_positive(lambda_margin),
        lambda_margin,
        format!("lambda = {lambda:.6e} (upper {lambda_upper:.6e})"),
    ));
    let (sign_m, sign_margin) = argmin(lobes.iter().map(|l| l.sign_margin));
    checks.push(Check::new(
        "sign_pattern",
        Verdict::strictly_positive(sign_margin),
        sign_margin,
        format!("{SIGN_SAMPLES} interior samples per lobe; tightest at m = {}", sign_m + 1),
    ));
    let (h1_m, h1_margin) = argmin(hyp1_margins.iter().copied());
    checks.push(Check::new(
        "hyp_lobe_dominance",
        Verdict::nonnegative(h1_margin),
        h1_margin,
        format!(
            "positive lobe >= (1 + 3 * tail of p) * negative lobe for m = 1..{periods}; tightest at m = {}",
            h1_m + 1
        ),
    ));
    let (h2_m, h2_margin) = argmin(hyp2_margins.iter().copied());
    checks.push(Check::new(
        "hyp_epsilon_slack",
        Verdict::nonnegative(h2_margin),
        h2_margin,
        format!("positive lobe <= epsilon_m + negative lobe; tightest at m = {}", h2_m + 1),
    ));
    let (e_m, e_min) = argmin(hyp2_epsilons.iter().copied());
    checks.push(Check::new(
        "epsilon_positive",
        Verdict::strictly_positive(e_min),
        e_min,
        format!(
            "epsilon = {epsilon_sum:.6e} ({} remainder); smallest epsilon_m at m = {}",
            if opts.epsilon_remainder.is_some() { "certified" } else { "no" },
            e_m + 1
        ),
    ));

    Ok(HypothesisReport {
        periods,
        lambda,
        lambda_upper,
        lambda_ok: checks[0].pass,
        sign_pattern_ok: sign_pattern.iter().map(|v| *v == Verdict::Pass).collect(),
        positive_lobes,
        negative_lobes,
        p_tails: tails[..periods].to_vec(),
        hyp1_margins,
        hyp2_epsilons,
        hyp2_margins,
        strategy: opts.strategy,
        epsilon_partial,
        epsilon_remainder: opts.epsilon_remainder,
        epsilon_sum,
        delta,
        checks,
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let (i, v) = argmin(values.map(|v| -v));
    (i, -v)
}

/// Grid maximum of `z` within one period `[a_{2m}, a_{2m+2}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodMax {
    pub m: usize,
    pub s: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConclusionReport {
    pub z_negative: bool,
    pub z_bounded: bool,
    pub h_positive: bool,
    pub h_over_s_decreasing: bool,
    pub h_bounded: bool,
    pub sup_abs_z: f64,
    pub sup_h: f64,
    pub z_sup_bound: f64,
    /// Where `z` peaks in each covered period (diagnostic only).
    pub period_maxima: Vec<PeriodMax>,
    pub checks: Vec<Check>,
}

impl ConclusionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Conclusions on a sampled kernel: `z < 0`, `|z| < (ε+δ)e^λ`, `h > 0`,
/// `h/s` strictly decreasing (checked on `h` and via `z/s < 0`), `h` bounded.
pub fn check_conclusions(kernel: &KernelPair, nodes: &NodeSequence) -> Result<ConclusionReport, LemmaError> {
    let grid = &kernel.grid;
    if grid.is_empty() || (grid[0] - nodes.start()).abs() > 1e-12 * nodes.start().abs().max(1.0) {
        return Err(LemmaError::GridMismatch {
            grid_start: grid.first().copied().unwrap_or(f64::NAN),
            node_start: nodes.start(),
        });
    }
    let z = &kernel.z_values;
    let h = &kernel.h_values;
    let interior = 1..grid.len();

    let (zi, z_max) = argmax(interior.clone().map(|i| z[i]));
    let z_negative = Verdict::strictly_negative(if grid.len() > 1 { z_max } else { 0.0 });
    let sup_abs_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let z_margin = kernel.z_sup_bound - sup_abs_z;
    let z_bounded = if z_margin.is_finite() { Verdict::strictly_positive(z_margin) } else { Verdict::Fail };

    let (hi, h_min) = argmin(interior.clone().map(|i| h[i]));
    let h_positive = Verdict::strictly_positive(if grid.len() > 1 { h_min } else { 0.0 });

    let ratio = kernel.h_over_s();
    let (di, d_max) = argmax(ratio.windows(2).map(|w| w[1] - w[0]));
    let by_h = Verdict::strictly_negative(if ratio.len() > 1 { d_max } else { 0.0 });
    let (_, zs_max) = argmax(interior.clone().map(|i| z[i] / grid[i]));
    let by_z = Verdict::strictly_negative(if grid.len() > 1 { zs_max } else { 0.0 });
    let decreasing = if by_h == by_z { by_h } else { Verdict::Fail };

    let sup_h = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h_margin = kernel.z_sup_bound - sup_h;
    let h_bounded = if h_margin.is_finite() { Verdict::nonnegative(h_margin) } else { Verdict::Fail };

    let mut period_maxima = Vec::new();
    for m in 1..=nodes.periods() {
        let (lo, hi_s) = (nodes.a(2 * m), nodes.a(2 * m + 2));
        let start = grid.partition_point(|&s| s < lo);
        let end = grid.partition_point(|&s| s <= hi_s);
        if start >= end {
            continue;
        }
        let (k, zm) = argmax((start..end).map(|i| z[i]));
        period_maxima.push(PeriodMax { m, s: grid[start + k], z: zm });
    }

    let at = |i: usize| grid.get(i).copied().unwrap_or(f64::NAN);
    let checks = vec![
        Check::new("z_negative", z_negative, 0.0 - z_max, format!("max z = {z_max:.6e} at s = {}", at(zi + 1))),
        Check::new("z_bounded", z_bounded, if z_margin.is_finite() { z_margin } else { 0.0 }, format!("sup|z| = {sup_abs_z:.6e}, bound (eps + delta) e^lambda = {:.6e}", kernel.z_sup_bound)),
        Check::new("h_positive", h_positive, h_min, format!("min h = {h_min:.6e} at s = {}", at(hi + 1))),
        Check::new(
            "h_over_s_decreasing",
            decreasing,
            -d_max,
            format!("largest step of h/s = {d_max:.6e} on cell {di}; max z/s = {zs_max:.6e}"),
        ),
        Check::new("h_bounded", h_bounded, if h_margin.is_finite() { h_margin } else { 0.0 }, format!("sup h = {sup_h:.6e}")),
    ];
    Ok(ConclusionReport {
        z_negative: checks[0].pass,
        z_bounded: checks[1].pass,
        h_positive: checks[2].pass,
        h_over_s_decreasing: checks[3].pass,
        h_bounded: checks[4].pass,
        sup_abs_z,
        sup_h,
        z_sup_bound: kernel.z_sup_bound,
        period_maxima,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RemarkReport {
    /// `inf_m (a_{2m+2} - a_{2m})`.
    pub remark_a: f64,
    /// `∫_{s0}^∞ (s - s0) p(s) ds`.
    pub remark_p_moment: f64,
    pub moment_uncertainty: f64,
    /// `Σ_{m=1}^{M} ∫_{a_{2m}}^∞ p`.
    pub tail_sum_partial: f64,
    /// Bound on `Σ_{m>M} ∫_{a_{2m}}^∞ p` from the first moment past `a_{2M}`.
    pub tail_sum_remainder: f64,
    pub epsilon_over_q_minus: f64,
    pub remark_sum_ok: bool,
    pub checks: Vec<Check>,
}

impl RemarkReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The extra summability condition on `p`: with `A = inf(a_{2m+2} - a_{2m})`,
/// `Σ_m ∫_{a_{2m}}^∞ p <= ε / q₋`, and the chain
/// `A Σ_{m>=2} ∫_{a_{2m}}^∞ p <= ∫_{s0}^∞ (s - s0) p`.
pub fn check_remark<P: Coefficient + ?Sized>(
    p: &P,
    p_tail: &TailModel,
    nodes: &NodeSequence,
    q_minus: f64,
    epsilon: f64,
    opts: &LemmaOptions,
) -> Result<RemarkReport, LemmaError> {
    if !(q_minus > 0.0) {
        return Err(LemmaError::Nodes(format!("q_minus must be positive, got {q_minus}")));
    }
    let periods = nodes.periods();
    let remark_a = nodes.min_period();
    let s0 = nodes.start();
    let (tails, _) = p_tail_integrals(p, p_tail, nodes, opts)?;
    let moment_model = p_tail.first_moment(s0)?;
    let moment = moment_integral(p, &moment_model, s0, opts)?;
    let last = nodes.a(2 * periods);
    let far_model = p_tail.first_moment(last)?;
    let far = moment_integral(p, &far_model, last, opts)?;

    let tail_sum_partial: f64 = tails[..periods].iter().sum();
    let tail_sum_remainder = (far.value + far.total_uncertainty()) / remark_a;
    let epsilon_over_q_minus = epsilon / q_minus;
    let sum_margin = epsilon_over_q_minus - (tail_sum_partial + tail_sum_remainder);
    let chain_lhs = remark_a * tails[1..periods].iter().sum::<f64>();
    let chain_margin = moment.value + moment.total_uncertainty() - chain_lhs;

    let checks = vec![
        Check::new("remark_gap_positive", Verdict::strictly_positive(remark_a), remark_a, format!("A = {remark_a:.6e}")),
        Check::new(
            "remark_sum_bound",
            Verdict::nonnegative(sum_margin),
            sum_margin,
            format!(
                "sum of p tails {tail_sum_partial:.6e} + remainder {tail_sum_remainder:.6e} <= epsilon / q_minus = {epsilon_over_q_minus:.6e}"
            ),
        ),
        Check::new(
            "remark_moment_chain",
            Verdict::nonnegative(chain_margin),
            chain_margin,
            format!("A * sum over m >= 2 = {chain_lhs:.6e} <= first moment {:.6e}", moment.value),
        ),
    ];
    Ok(RemarkReport {
        remark_a,
        remark_p_moment: moment.value,
        moment_uncertainty: moment.total_uncertainty(),
        tail_sum_partial,
        tail_sum_remainder,
        epsilon_over_q_minus,
        remark_sum_ok: checks[1].pass,
        checks,
    })
}

/// `∫_origin^∞ (s - origin) p(s) ds`.
pub fn moment_integral<P: Coefficient + ?Sized>(
    p: &P,
    moment_model: &TailModel,
    origin: f64,
    opts: &LemmaOptions,
) -> Result<IntegralResult, LemmaError> {
    let f = |s: f64| p.value(s).map(|v| (s - origin) * v);
    let breaks = p.breakpoints(origin, f64::INFINITY);
    Ok(quadrature::integrate_tail(f, origin, moment_model, &breaks, opts.tail_tol)?)
}

/// Hypotheses, conclusions and the summability remark, as one report.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub hypotheses: Option<HypothesisReport>,
    pub conclusions: Option<ConclusionReport>,
    pub remark: Option<RemarkReport>,
}

impl LemmaReport {
    /// All checks, sorted by name.
    pub fn checks(&self) -> Vec<Check> {
        let mut all: Vec<Check> = Vec::new();
        if let Some(h) = &self.hypotheses {
            all.extend(h.checks.iter().cloned());
        }
        if let Some(c) = &self.conclusions {
            all.extend(c.checks.iter().cloned());
        }
        if let Some(r) = &self.remark {
            all.extend(r.checks.iter().cloned());
        }
        all.sort_by(|a, b| a.name.cmp(&b.name));
        all
    }

    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{from_fn, CoefficientExpr};
    use crate::kernel::{assemble, uniform_grid, ZSamples};

    #[test]
    fn exp_below_one_plus_three_x_on_unit_interval() {
        for k in 0..256 {
            let x = k as f64 / 255.0;
            assert!(x.exp() <= 1.0 + 3.0 * x, "{x}");
        }
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::strictly_negative(-1e-6), Verdict::Pass);
        assert_eq!(Verdict::strictly_negative(-1e-13), Verdict::Inconclusive);
        assert_eq!(Verdict::strictly_negative(0.0), Verdict::Fail);
        assert_eq!(Verdict::nonnegative(-1e-13), Verdict::Pass);
        assert_eq!(Verdict::nonnegative(-1e-6), Verdict::Fail);
    }

    #[test]
    fn node_sequence_validation() {
        assert!(NodeSequence::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(NodeSequence::new(vec![1.0, 2.0, 3.0, 3.0, 4.0]).is_err());
        let n = NodeSequence::multiples_of_pi(3).unwrap();
        assert_eq!(n.periods(), 3);
        assert_eq!(n.start(), 2.0 * std::f64::consts::PI);
        assert!((n.min_period() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn zero_forcing_fails_sign_pattern() {
        let p = CoefficientExpr::parse("1/s^3").unwrap();
        let q = from_fn(|_| 0.0);
        let nodes = NodeSequence::multiples_of_pi(4).unwrap();
        let r = check_hypotheses(&p, &TailModel::power(3.0, 1.0), &*q, &nodes, &LemmaOptions::default()).unwrap();
        assert!(r.sign_pattern_ok.iter().all(|ok| !ok));
        let sign = r.checks.iter().find(|c| c.name == "sign_pattern").unwrap();
        assert!(!sign.pass);
        assert_eq!(sign.margin, 0.0);
    }

    #[test]
    fn zero_p_remark_is_trivial() {
        let p = from_fn(|_| 0.0);
        let nodes = NodeSequence::multiples_of_pi(4).unwrap();
        let r = check_remark(&*p, &TailModel::power(3.0, 0.0), &nodes, 1.0, 0.5, &LemmaOptions::default()).unwrap();
        assert_eq!(r.remark_p_moment, 0.0);
        assert_eq!(r.tail_sum_partial, 0.0);
        assert!(r.all_pass());
    }

    #[test]
    fn zero_kernel_fails_negativity_with_zero_margin() {
        let nodes = NodeSequence::multiples_of_pi(2).unwrap();
        let grid = uniform_grid(nodes.start(), nodes.end(), 200);
        let z = ZSamples::from_fn(&grid, 0.05, |_| 0.0).unwrap();
        let k = assemble(&z, 0.0, Some(0.0), None).unwrap();
        let c = check_conclusions(&k, &nodes).unwrap();
        assert!(!c.z_negative);
        let check = &c.checks[0];
        assert_eq!(check.margin, 0.0);
        assert!(!check.pass);
    }

    #[test]
    fn unit_negative_kernel_passes_conclusions() {
        let nodes = NodeSequence::multiples_of_pi(2).unwrap();
        let grid = uniform_grid(nodes.start(), nodes.end(), 400);
        let z = ZSamples::from_fn(&grid, 0.01, |_| -1.0).unwrap();
        let k = assemble(&z, 0.0, Some(1.5), None).unwrap();
        let c = check_conclusions(&k, &nodes).unwrap();
        assert!(c.all_pass(), "{:?}", c.checks);
    }

    #[test]
    fn grid_must_start_at_first_node() {
        let nodes = NodeSequence::multiples_of_pi(2).unwrap();
        let grid = uniform_grid(1.0, 10.0, 10);
        let z = ZSamples::from_fn(&grid, 0.05, |_| -1.0).unwrap();
        let k = assemble(&z, 0.0, Some(1.0), None).unwrap();
        assert!(matches!(check_conclusions(&k, &nodes), Err(LemmaError::GridMismatch { .. })));
    }
}
