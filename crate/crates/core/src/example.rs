//! The oscillating sin² family on the nodes `a_m = mπ`:
//!
//! ```text
//! q(s) =  c_m sin²s   on [a_{2m}, a_{2m+1}],
//! q(s) = -d_m sin²s   on [a_{2m+1}, a_{2m+2}],
//! ```
//!
//! with `d_m` in `[2q₋/π, 2q₊/π]` and `c_m` in the band
//! `d_m + (q₊/π) I_m [γ, σ] + (2^{1-m}/π) [η, θ]`, where `I_m = ∫_{a_{2m}}^∞ p`.
//! Also builds ordered pairs `q₁ <= q₂` and checks the family's integral
//! features (divergence of `∫|q|/s`, convergence of `∫|q|/s^{1+ς}`).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::{BinOp, Coefficient, CoefficientExpr, EvalError, Expr};
use crate::lemma::{self, Check, LemmaError, LemmaOptions, NodeSequence, Verdict};
use crate::quadrature::{self, QuadratureError, TailModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExampleError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("lambda = {0} must be below 1")]
    LambdaTooLarge(f64),
    #[error("empty amplitude band at m = {m}")]
    EmptyBand { m: usize },
    #[error("pair chain link `{link}` fails at m = {m} (margin {margin:e})")]
    ChainViolation { link: String, m: usize, margin: f64 },
    #[error(transparent)]
    Lemma(#[from] LemmaError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Default damping coefficient `p(s) = 1/s³`.
pub fn default_p() -> CoefficientExpr {
    CoefficientExpr::parse("1/s^3").expect("static expression")
}

/// Tail model matching [`default_p`].
pub fn default_p_tail() -> TailModel {
    TailModel::power(3.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationParams {
    pub q_minus: f64,
    pub q_plus: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub eta: f64,
    pub theta: f64,
    /// Must equal `a_2 = 2π`.
    pub s0: f64,
    #[serde(serialize_with = "serialize_expr")]
    pub p: CoefficientExpr,
    #[serde(skip)]
    pub p_tail: TailModel,
    /// Number of periods `[a_{2m}, a_{2m+2}]` generated.
    pub m_max: usize,
    /// Position of `c_m` inside its band, 0 = lower edge, 1 = upper edge.
    pub c_position: f64,
    /// Position of `d_m` inside `[2q₋/π, 2q₊/π]`.
    pub d_position: f64,
}

pub(crate) fn serialize_expr<S: serde::Serializer>(e: &CoefficientExpr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(e.source())
}

impl Default for OscillationParams {
    fn default() -> Self {
        OscillationParams {
            q_minus: 1.0,
            q_plus: 2.0,
            gamma: 6.0,
            sigma: 7.0,
            eta: 0.0,
            theta: 1.0,
            s0: 2.0 * PI,
            p: default_p(),
            p_tail: default_p_tail(),
            m_max: 25,
            c_position: 0.0,
            d_position: 0.5,
        }
    }
}

fn check_bounds(q_minus: f64, q_plus: f64) -> Result<(), ExampleError> {
    if !(q_minus > 0.0 && q_minus < q_plus && q_plus.is_finite()) {
        return Err(ExampleError::Invalid(format!(
            "constraint 0 < q₋ < q₊ < ∞ violated: q₋ = {q_minus}, q₊ = {q_plus}"
        )));
    }
    Ok(())
}

fn check_band(label: &str, gamma: f64, sigma: f64, eta: f64, theta: f64) -> Result<(), ExampleError> {
    if !(gamma >= 6.0 && gamma < sigma && sigma.is_finite()) {
        return Err(ExampleError::Invalid(format!(
            "{label}constraint 6 ≤ γ < σ < ∞ violated: γ = {gamma}, σ = {sigma}"
        )));
    }
    if !(eta >= 0.0 && eta < theta && theta.is_finite()) {
        return Err(ExampleError::Invalid(format!(
            "{label}constraint 0 ≤ η < θ < ∞ violated: η = {eta}, θ = {theta}"
        )));
    }
    Ok(())
}

fn check_start(s0: f64, m_max: usize) -> Result<(), ExampleError> {
    if (s0 - 2.0 * PI).abs() > 1e-12 {
        return Err(ExampleError::Invalid(format!("s0 must equal a_2 = 2π, got {s0}")));
    }
    if m_max < 2 {
        return Err(ExampleError::Invalid(format!("m_max must be at least 2, got {m_max}")));
    }
    Ok(())
}

impl OscillationParams {
    pub fn validate(&self) -> Result<(), ExampleError> {
        check_bounds(self.q_minus, self.q_plus)?;
        check_band("", self.gamma, self.sigma, self.eta, self.theta)?;
        check_start(self.s0, self.m_max)?;
        for (name, v) in [("c_position", self.c_position), ("d_position", self.d_position)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ExampleError::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Numeric continuity and C¹ check across every interior node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Smoothness {
    pub max_value_jump: f64,
    pub max_slope_jump: f64,
    pub max_node_value: f64,
    pub smooth: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationSpec {
    pub params: OscillationParams,
    pub nodes: NodeSequence,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// `I_m = ∫_{a_{2m}}^∞ p`.
    pub p_tails: Vec<f64>,
    pub lambda: f64,
    #[serde(skip)]
    pub q: CoefficientExpr,
    /// `((2 + σλ) q₊ + θ) / π`.
    pub sup_bound: f64,
    pub max_sampled_abs_q: f64,
    pub smoothness: Smoothness,
}

fn node_expr(m: usize) -> Expr {
    Expr::binary(BinOp::Mul, Expr::Num(m as f64), Expr::Pi)
}

/// Assemble the piecewise sin² function from amplitudes.
pub fn sin_squared_family(c: &[f64], d: &[f64]) -> Result<CoefficientExpr, ExampleError> {
    let mut nodes = Vec::with_capacity(2 * c.len() + 1);
    let mut pieces = Vec::with_capacity(2 * c.len());
    for (k, (&cm, &dm)) in c.iter().zip(d).enumerate() {
        let m = k + 1;
        nodes.push(node_expr(2 * m));
        pieces.push(Expr::sin_squared_lobe(cm));
        nodes.push(node_expr(2 * m + 1));
        pieces.push(Expr::sin_squared_lobe(-dm));
    }
    nodes.push(node_expr(2 * c.len() + 2));
    CoefficientExpr::piecewise(nodes, pieces).map_err(|e| ExampleError::Invalid(e.to_string()))
}

fn smoothness(q: &CoefficientExpr) -> Result<Smoothness, EvalError> {
    let pieces = q.pieces();
    let nodes = q.nodes();
    let step = 1e-5;
    let mut out = Smoothness { max_value_jump: 0.0, max_slope_jump: 0.0, max_node_value: 0.0, smooth: true };
    for k in 1..pieces.len() {
        let a = nodes[k];
        let (left, right) = (&pieces[k - 1], &pieces[k]);
        let (l, r) = (left.eval(a)?, right.eval(a)?);
        let slope = |e: &Expr| -> Result<f64, EvalError> { Ok((e.eval(a + step)? - e.eval(a - step)?) / (2.0 * step)) };
        out.max_value_jump = out.max_value_jump.max((l - r).abs());
        out.max_slope_jump = out.max_slope_jump.max((slope(left)? - slope(right)?).abs());
        out.max_node_value = out.max_node_value.max(l.abs()).max(r.abs());
    }
    out.smooth = out.max_value_jump <= 1e-12 && out.max_slope_jump <= 1e-8 && out.max_node_value <= 1e-12;
    Ok(out)
}

fn max_abs_sampled(q: &CoefficientExpr, nodes: &NodeSequence) -> Result<f64, EvalError> {
    let slice = nodes.as_slice();
    let mut best = 0.0f64;
    for w in slice.windows(2) {
        for j in 0..=64 {
            let s = w[0] + (w[1] - w[0]) * j as f64 / 64.0;
            best = best.max(q.eval(s)?.abs());
        }
    }
    Ok(best)
}

fn lemma_opts() -> LemmaOptions {
    LemmaOptions::default()
}

/// `λ` and `I_m` for `m = 1..=m_max+1`.
fn p_data(p: &CoefficientExpr, p_tail: &TailModel, m_max: usize) -> Result<(NodeSequence, Vec<f64>, f64), ExampleError> {
    let nodes = NodeSequence::multiples_of_pi(m_max)?;
    for &s in nodes.as_slice() {
        let v = p.eval(s)?;
        if v < 0.0 {
            return Err(ExampleError::Invalid(format!("p must be nonnegative, p({s}) = {v}")));
        }
    }
    let (tails, lambda) = lemma::p_tail_integrals(p, p_tail, &nodes, &lemma_opts())?;
    let lambda_upper = lambda.value + lambda.total_uncertainty();
    if !(lambda_upper < 1.0) {
        return Err(ExampleError::LambdaTooLarge(lambda.value));
    }
    Ok((nodes, tails, lambda.value))
}

fn geometric(m: usize) -> f64 {
    2f64.powi(1 - m as i32) / PI
}

fn finish_spec(params: OscillationParams, nodes: NodeSequence, c: Vec<f64>, d: Vec<f64>, tails: &[f64], lambda: f64) -> Result<OscillationSpec, ExampleError> {
    let q = sin_squared_family(&c, &d)?;
    let sup_bound = ((2.0 + params.sigma * lambda) * params.q_plus + params.theta) / PI;
    let max_sampled_abs_q = max_abs_sampled(&q, &nodes)?;
    let smoothness = smoothness(&q)?;
    Ok(OscillationSpec {
        p_tails: tails[..params.m_max].to_vec(),
        params,
        nodes,
        c,
        d,
        lambda,
        q,
        sup_bound,
        max_sampled_abs_q,
        smoothness,
    })
}

/// Build the family with `d_m` and `c_m` at the configured band positions.
pub fn build_oscillation(params: OscillationParams) -> Result<OscillationSpec, ExampleError> {
    params.validate()?;
    let (nodes, tails, lambda) = p_data(&params.p, &params.p_tail, params.m_max)?;
    let (qm, qp) = (params.q_minus, params.q_plus);
    let mut c = Vec::with_capacity(params.m_max);
    let mut d = Vec::with_capacity(params.m_max);
    for m in 1..=params.m_max {
        let dm = 2.0 * qm / PI + params.d_position * 2.0 * (qp - qm) / PI;
        let i_m = tails[m - 1];
        let lower = dm + params.gamma * qp / PI * i_m + params.eta * geometric(m);
        let upper = dm + params.sigma * qp / PI * i_m + params.theta * geometric(m);
        if !(upper >= lower) {
            return Err(ExampleError::EmptyBand { m });
        }
        c.push(lower + params.c_position * (upper - lower));
        d.push(dm);
    }
    finish_spec(params, nodes, c, d, &tails, lambda)
}

impl OscillationSpec {
    /// Certified bound on `Σ_{m>M} ε_m` for the slack choice of `ε_m`, from
    /// `ε_m <= (σ/2) q₊ I_m + θ 2^{-m}` and the first moment of `p` past `a_{2M}`.
    pub fn epsilon_remainder(&self) -> Result<f64, ExampleError> {
        let periods = self.nodes.periods();
        let origin = self.nodes.a(2 * periods);
        let model = self.params.p_tail.first_moment(origin)?;
        let moment = lemma::moment_integral(&self.params.p, &model, origin, &lemma_opts())?;
        let a = self.nodes.min_period();
        let tail_sum = (moment.value + moment.total_uncertainty()) / a;
        Ok(0.5 * self.params.sigma * self.params.q_plus * tail_sum + self.params.theta * 2f64.powi(-(periods as i32)))
    }

    /// Lemma options carrying this family's certified ε remainder.
    pub fn lemma_options(&self) -> Result<LemmaOptions, ExampleError> {
        Ok(LemmaOptions { epsilon_remainder: Some(self.epsilon_remainder()?), ..LemmaOptions::default() })
    }

    /// Expected lobe integrals `(π/2) c_m` and `(π/2) d_m`.
    pub fn expected_lobes(&self) -> (Vec<f64>, Vec<f64>) {
        (self.c.iter().map(|c| 0.5 * PI * c).collect(), self.d.iter().map(|d| 0.5 * PI * d).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandConstants {
    pub gamma: f64,
    pub sigma: f64,
    pub eta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairParams {
    pub q_minus: f64,
    pub q_plus: f64,
    #[serde(serialize_with = "serialize_expr")]
    pub p: CoefficientExpr,
    #[serde(skip)]
    pub p_tail: TailModel,
    pub s0: f64,
    pub lower: BandConstants,
    pub upper: BandConstants,
    pub alpha_gap: f64,
    pub beta_gap: f64,
    pub m_max: usize,
}

impl Default for PairParams {
    fn default() -> Self {
        PairParams {
            q_minus: 1.0,
            q_plus: 2.0,
            p: default_p(),
            p_tail: default_p_tail(),
            s0: 2.0 * PI,
            lower: BandConstants { gamma: 6.0, sigma: 7.0, eta: 0.0, theta: 1.0 },
            upper: BandConstants { gamma: 8.0, sigma: 9.0, eta: 2.0, theta: 3.0 },
            alpha_gap: 0.5,
            beta_gap: 0.5,
            m_max: 25,
        }
    }
}

impl PairParams {
    /// Parameter constraints that do not need `λ`.
    pub fn validate(&self) -> Result<(), ExampleError> {
        check_bounds(self.q_minus, self.q_plus)?;
        let (l, u) = (&self.lower, &self.upper);
        check_band("set 1: ", l.gamma, l.sigma, l.eta, l.theta)?;
        check_band("set 2: ", u.gamma, u.sigma, u.eta, u.theta)?;
        check_start(self.s0, self.m_max)?;
        if !(l.sigma < u.gamma) {
            return Err(ExampleError::Invalid(format!("constraint σ¹ < γ² violated: σ¹ = {}, γ² = {}", l.sigma, u.gamma)));
        }
        if !(l.theta < u.eta) {
            return Err(ExampleError::Invalid(format!("constraint θ¹ < η² violated: θ¹ = {}, η² = {}", l.theta, u.eta)));
        }
        if !(self.alpha_gap > 0.0 && self.alpha_gap < u.gamma - l.sigma) {
            return Err(ExampleError::Invalid(format!(
                "alpha_gap must lie in (0, γ² − σ¹) = (0, {}), got {}",
                u.gamma - l.sigma,
                self.alpha_gap
            )));
        }
        if !(self.beta_gap > 0.0 && self.beta_gap < u.eta - l.theta) {
            return Err(ExampleError::Invalid(format!(
                "beta_gap must lie in (0, η² − θ¹) = (0, {}), got {}",
                u.eta - l.theta,
                self.beta_gap
            )));
        }
        Ok(())
    }

    /// `q₋ + (alpha_gap/2) q₊ λ + beta_gap/2`, required to stay below `q₊`.
    pub fn smallness_lhs(&self, lambda: f64) -> f64 {
        self.q_minus + 0.5 * self.alpha_gap * self.q_plus * lambda + 0.5 * self.beta_gap
    }

    /// Parameters recorded on each pair member. The pair fixes amplitudes
    /// directly, so the band positions only describe `c` (lower edge).
    fn member(&self, band: &BandConstants, c_position: f64) -> OscillationParams {
        OscillationParams {
            q_minus: self.q_minus,
            q_plus: self.q_plus,
            gamma: band.gamma,
            sigma: band.sigma,
            eta: band.eta,
            theta: band.theta,
            s0: self.s0,
            p: self.p.clone(),
            p_tail: self.p_tail.clone(),
            m_max: self.m_max,
            c_position,
            d_position: 0.0,
        }
    }
}

/// Tightest margin of one link of the pair inequality chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLink {
    pub name: String,
    pub min_margin: f64,
    pub worst_m: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub lambda: f64,
    pub smallness_lhs: f64,
    pub smallness_margin: f64,
    pub links: Vec<ChainLink>,
    /// `c² - c¹`, `c¹ - d¹`, `d¹ - d²`, `d²`, minimised over `m`.
    pub ordering: Vec<ChainLink>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationPair {
    pub lower: OscillationSpec,
    pub upper: OscillationSpec,
    pub report: PairReport,
}

/// Build `(q₁, q₂)` with `q₁ <= q₂`: `d² = 2q₋/π`, `d¹` shifted up by the
/// gaps, `c¹` at the lower edge of its band over `d¹`, `c²` at the lower
/// edge of its band over `d²`.
pub fn build_pair(params: PairParams) -> Result<OscillationPair, ExampleError> {
    params.validate()?;
    let (nodes, tails, lambda) = p_data(&params.p, &params.p_tail, params.m_max)?;
    let smallness_lhs = params.smallness_lhs(lambda);
    if !(smallness_lhs < params.q_plus) {
        return Err(ExampleError::Invalid(format!(
            "smallness q₋ + (alpha_gap/2) q₊ λ + beta_gap/2 < q₊ violated: {smallness_lhs} >= {}",
            params.q_plus
        )));
    }
    let (qm, qp) = (params.q_minus, params.q_plus);
    let (l, u, al, be) = (params.lower, params.upper, params.alpha_gap, params.beta_gap);
    let names = [
        "d1_shifted_above_floor",
        "d1_shifted_below_d2",
        "d2_below_d1",
        "d1_below_ceiling",
        "c1_above_band_floor",
        "c1_below_band_ceiling",
        "c1_ceiling_below_shifted",
        "shifted_below_c2_floor",
        "c2_above_band_floor",
        "c2_below_band_ceiling",
    ];
    let ordering_names = ["c2_minus_c1", "c1_minus_d1", "d1_minus_d2", "d2_positive"];
    let mut links: Vec<ChainLink> =
        names.iter().map(|n| ChainLink { name: n.to_string(), min_margin: f64::INFINITY, worst_m: 0 }).collect();
    let mut ordering: Vec<ChainLink> = ordering_names
        .iter()
        .map(|n| ChainLink { name: n.to_string(), min_margin: f64::INFINITY, worst_m: 0 })
        .collect();
    let (mut c1, mut d1, mut c2, mut d2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for m in 1..=params.m_max {
        let i_m = tails[m - 1];
        let slope = qp / PI * i_m;
        let geo = geometric(m);
        let d2m = 2.0 * qm / PI;
        let d1m = d2m + al * slope + be * geo;
        let c1m = d1m + l.gamma * slope + l.eta * geo;
        let c2m = d2m + u.gamma * slope + u.eta * geo;
        let shifted = d1m - al * slope - be * geo;
        let c1_ceiling = d1m + l.sigma * slope + l.theta * geo;
        let via_d2 = d2m + al * slope + be * geo + l.sigma * slope + l.theta * geo;
        let c2_floor = d2m + u.gamma * slope + u.eta * geo;
        let c2_ceiling = d2m + u.sigma * slope + u.theta * geo;
        let margins = [
            shifted - 2.0 * qm / PI,
            d2m - shifted,
            d1m - d2m,
            2.0 * qp / PI - d1m,
            c1m - (d1m + l.gamma * slope + l.eta * geo),
            c1_ceiling - c1m,
            via_d2 - c1_ceiling,
            c2_floor - via_d2,
            c2m - c2_floor,
            c2_ceiling - c2m,
        ];
        for (link, &margin) in links.iter_mut().zip(&margins) {
            if margin < -lemma::STRICT_THRESHOLD {
                return Err(ExampleError::ChainViolation { link: link.name.clone(), m, margin });
            }
            if margin < link.min_margin {
                link.min_margin = margin;
                link.worst_m = m;
            }
        }
        let order = [c2m - c1m, c1m - d1m, d1m - d2m, d2m];
        for (link, &margin) in ordering.iter_mut().zip(&order) {
            if margin < link.min_margin {
                link.min_margin = margin;
                link.worst_m = m;
            }
        }
        c1.push(c1m);
        d1.push(d1m);
        c2.push(c2m);
        d2.push(d2m);
    }
    if let Some(bad) = ordering.iter().find(|o| o.min_margin < 0.0 || (o.name == "d2_positive" && o.min_margin <= 0.0)) {
        return Err(ExampleError::ChainViolation { link: bad.name.clone(), m: bad.worst_m, margin: bad.min_margin });
    }
    let lower = finish_spec(params.member(&l, 0.0), nodes.clone(), c1, d1, &tails, lambda)?;
    let upper = finish_spec(params.member(&u, 0.0), nodes, c2, d2, &tails, lambda)?;
    Ok(OscillationPair {
        lower,
        upper,
        report: PairReport {
            lambda,
            smallness_lhs,
            smallness_margin: params.q_plus - smallness_lhs,
            links,
            ordering,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub points: usize,
    pub min_slack: f64,
    pub min_slack_at: f64,
    /// First grid point where `q₁ > q₂`, with the (negative) slack there.
    pub first_violation: Option<(f64, f64)>,
    /// Largest deviation of the observed slack from the lobe formula.
    pub max_formula_deviation: f64,
    pub pass: bool,
}

/// `q₁ <= q₂` on `grid`. On positive lobes the slack is `(c²-c¹) sin²s`, on
/// negative lobes `(d¹-d²) sin²s`; the observed slack is compared with that.
pub fn verify_pair(q1: &OscillationSpec, q2: &OscillationSpec, grid: &[f64]) -> Result<OrderingReport, ExampleError> {
    if q1.nodes != q2.nodes {
        return Err(ExampleError::Invalid("pair members do not share nodes".into()));
    }
    let nodes = q1.nodes.as_slice();
    let mut report = OrderingReport {
        points: grid.len(),
        min_slack: f64::INFINITY,
        min_slack_at: f64::NAN,
        first_violation: None,
        max_formula_deviation: 0.0,
        pass: true,
    };
    for &s in grid {
        let slack = q2.q.eval(s)? - q1.q.eval(s)?;
        if slack < report.min_slack {
            report.min_slack = slack;
            report.min_slack_at = s;
        }
        if slack < -lemma::STRICT_THRESHOLD && report.first_violation.is_none() {
            report.first_violation = Some((s, slack));
        }
        // branch owning s, as in the piecewise convention
        let k = nodes.partition_point(|&n| n <= s).saturating_sub(1).min(nodes.len() - 2);
        let m = k / 2;
        let expected = if k % 2 == 0 { q2.c[m] - q1.c[m] } else { q1.d[m] - q2.d[m] } * s.sin().powi(2);
        report.max_formula_deviation = report.max_formula_deviation.max((expected - slack).abs());
    }
    report.pass = report.first_violation.is_none() && report.max_formula_deviation <= 1e-12;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureReport {
    pub periods: usize,
    /// `∫_{s0}^{a_{2M+2}} |q|/s` for `M = 1..`.
    pub partial_sums: Vec<f64>,
    /// `Σ_{m<=M} d_m / (8(m+1))`.
    pub lower_bounds: Vec<f64>,
    /// `(q₋/(4π)) Σ_{m<=M} 1/(m+1)`.
    pub harmonic_bounds: Vec<f64>,
    pub dominance_margin: f64,
    /// Least-squares slope of the partial sums against `ln M`.
    pub log_growth_slope: f64,
    pub varsigma: f64,
    pub truncation_points: Vec<f64>,
    pub weighted_partials: Vec<f64>,
    /// `sup_bound · X^{-ς} / ς` at each truncation point.
    pub tail_bounds: Vec<f64>,
    pub cauchy_margin: f64,
    pub checks: Vec<Check>,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Divergence of `∫|q|/s` (partial sums dominating `Σ d_m/(8(m+1))`, with
/// logarithmic growth) and convergence of `∫|q|/s^{1+ς}` (Cauchy under
/// doubling of the truncation point, within `sup_bound X^{-ς}/ς`).
pub fn check_integral_features(spec: &OscillationSpec, varsigma: f64, periods: usize) -> Result<FeatureReport, ExampleError> {
    if !(varsigma > 0.0) {
        return Err(ExampleError::Invalid(format!("varsigma must be positive, got {varsigma}")));
    }
    if periods < 2 || periods > spec.nodes.periods() {
        return Err(ExampleError::Invalid(format!(
            "periods must lie in [2, {}], got {periods}",
            spec.nodes.periods()
        )));
    }
    let q = &spec.q;
    let tol = quadrature::DEFAULT_FINITE_TOL;
    let cells: Vec<f64> = (2..2 * periods + 2)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (spec.nodes.a(k), spec.nodes.a(k + 1));
            quadrature::integrate_finite(|s| q.value(s).map(|v| v.abs() / s), a, b, tol).map(|r| r.value)
        })
        .collect::<Result<_, _>>()?;
    let mut partial_sums = Vec::with_capacity(periods);
    let mut lower_bounds = Vec::with_capacity(periods);
    let mut harmonic_bounds = Vec::with_capacity(periods);
    let (mut acc, mut lb, mut hb) = (0.0, 0.0, 0.0);
    for m in 1..=periods {
        acc += cells[2 * m - 2] + cells[2 * m - 1];
        lb += spec.d[m - 1] / (8.0 * (m + 1) as f64);
        hb += spec.params.q_minus / (4.0 * PI * (m + 1) as f64);
        partial_sums.push(acc);
        lower_bounds.push(lb);
        harmonic_bounds.push(hb);
    }
    let dominance_margin = partial_sums
        .iter()
        .zip(&lower_bounds)
        .zip(&harmonic_bounds)
        .map(|((s, l), h)| (s - l).min(l - h))
        .fold(f64::INFINITY, f64::min);
    let ln_m: Vec<f64> = (1..=periods).map(|m| (m as f64).ln()).collect();
    let log_growth_slope = ls_slope(&ln_m, &partial_sums);

    let end = spec.nodes.a(2 * periods + 2);
    let mut truncation_points = Vec::new();
    let mut x = end;
    while x >= spec.nodes.start() && truncation_points.len() < 5 {
        truncation_points.push(x);
        x *= 0.5;
    }
    truncation_points.reverse();
    let weight = |s: f64| q.value(s).map(|v| v.abs() / s.powf(1.0 + varsigma));
    let start = spec.nodes.start();
    let weighted_partials: Vec<f64> = truncation_points
        .iter()
        .map(|&t| quadrature::integrate_seeded(weight, start, t, &q.breakpoints(start, t), tol).map(|r| r.value))
        .collect::<Result<_, _>>()?;
    let tail_bounds: Vec<f64> =
        truncation_points.iter().map(|t| spec.sup_bound * t.powf(-varsigma) / varsigma).collect();
    let cauchy_margin = weighted_partials
        .windows(2)
        .zip(&tail_bounds)
        .map(|(w, b)| b - (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);

    let checks = vec![
        Check::new(
            "divergence_dominates_lower_bound",
            Verdict::nonnegative(dominance_margin),
            dominance_margin,
            format!("partial sums of ∫|q|/s vs Σ d_m/(8(m+1)) for M = 1..{periods}"),
        ),
        Check::new(
            "divergence_log_growth",
            Verdict::strictly_positive(log_growth_slope),
            log_growth_slope,
            "least-squares slope against ln M",
        ),
        Check::new(
            "weighted_integral_cauchy",
            if truncation_points.len() >= 2 { Verdict::nonnegative(cauchy_margin) } else { Verdict::Fail },
            if cauchy_margin.is_finite() { cauchy_margin } else { 0.0 },
            format!("varsigma = {varsigma}; truncation doubled from {:.6e}", truncation_points[0]),
        ),
    ];
    Ok(FeatureReport {
        periods,
        partial_sums,
        lower_bounds,
        harmonic_bounds,
        dominance_margin,
        log_growth_slope,
        varsigma,
        truncation_points,
        weighted_partials,
        tail_bounds,
        cauchy_margin,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_below_six_is_rejected_by_name() {
        let params = OscillationParams { gamma: 5.0, ..OscillationParams::default() };
        let err = build_oscillation(params).unwrap_err().to_string();
        assert!(err.contains("6 ≤ γ"), "{err}");
    }

    #[test]
    fn default_band_for_d() {
        let spec = build_oscillation(OscillationParams { m_max: 3, ..Default::default() }).unwrap();
        for d in &spec.d {
            assert!((d - 3.0 / PI).abs() < 1e-15);
        }
        assert!(spec.smoothness.smooth, "{:?}", spec.smoothness);
    }

    #[test]
    fn zero_damping_collapses_c_band() {
        let params = OscillationParams {
            p: CoefficientExpr::parse("0").unwrap(),
            p_tail: TailModel::power(3.0, 0.0),
            m_max: 3,
            c_position: 1.0,
            ..Default::default()
        };
        let spec = build_oscillation(params).unwrap();
        assert!((spec.c[0] - spec.d[0] - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn same_spec_pair_has_zero_slack() {
        let spec = build_oscillation(OscillationParams { m_max: 2, ..Default::default() }).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| 2.0 * PI + i as f64 * PI / 100.0).collect();
        let r = verify_pair(&spec, &spec, &grid).unwrap();
        assert!(r.pass);
        assert_eq!(r.min_slack, 0.0);
    }

    #[test]
    fn ls_slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((ls_slope(&x, &y) - 2.5).abs() < 1e-14);
    }
}
