//! JSON run configuration. Every numeric field accepts a number or a
//! constant DSL expression such as `"pi/200"`.

use std::path::Path;

use clap::ValueEnum;
use oscillax::bridge::Nonlinearity;
use oscillax::bvp::{BoundaryTrace, ShiftChoice};
use oscillax::example::{BandConstants, OscillationParams, PairParams};
use oscillax::lemma::EpsilonStrategy;
use oscillax::{CoefficientExpr, TailModel};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ConstructExample,
    VerifyLemma,
    ComputeKernel,
    BuildPair,
    Bridge,
    SolveBvp,
    FullPipeline,
}

impl Mode {
    pub fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawScalar {
    Number(f64),
    Text(String),
}

/// A real number given as a literal or a constant expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScalar", into = "f64")]
pub struct Scalar(pub f64);

impl TryFrom<RawScalar> for Scalar {
    type Error = String;

    fn try_from(raw: RawScalar) -> Result<Self, String> {
        match raw {
            RawScalar::Number(x) => Ok(Scalar(x)),
            RawScalar::Text(t) => CoefficientExpr::parse(&t)
                .and_then(|e| e.constant())
                .map(Scalar)
                .map_err(|e| e.to_string()),
        }
    }
}

impl From<Scalar> for f64 {
    fn from(s: Scalar) -> f64 {
        s.0
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Scalar {
        Scalar(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailSpec {
    Power { exponent: Scalar, constant: Scalar },
    Exponential { rate: Scalar, constant: Scalar },
}

impl TailSpec {
    pub fn model(&self) -> TailModel {
        match *self {
            TailSpec::Power { exponent, constant } => TailModel::power(exponent.0, constant.0),
            TailSpec::Exponential { rate, constant } => TailModel::exponential(rate.0, constant.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillationBlock {
    pub q_minus: Scalar,
    pub q_plus: Scalar,
    pub gamma: Scalar,
    pub sigma: Scalar,
    pub eta: Scalar,
    pub theta: Scalar,
    pub p: String,
    pub p_tail: TailSpec,
    pub m_max: usize,
    pub c_position: Scalar,
    pub d_position: Scalar,
}

impl Default for OscillationBlock {
    fn default() -> Self {
        let d = OscillationParams::default();
        OscillationBlock {
            q_minus: d.q_minus.into(),
            q_plus: d.q_plus.into(),
            gamma: d.gamma.into(),
            sigma: d.sigma.into(),
            eta: d.eta.into(),
            theta: d.theta.into(),
            p: d.p.source().to_string(),
            p_tail: TailSpec::Power { exponent: Scalar(3.0), constant: Scalar(1.0) },
            m_max: d.m_max,
            c_position: d.c_position.into(),
            d_position: d.d_position.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandBlock {
    pub gamma: Scalar,
    pub sigma: Scalar,
    pub eta: Scalar,
    pub theta: Scalar,
}

impl From<BandConstants> for BandBlock {
    fn from(b: BandConstants) -> Self {
        BandBlock { gamma: b.gamma.into(), sigma: b.sigma.into(), eta: b.eta.into(), theta: b.theta.into() }
    }
}

impl From<BandBlock> for BandConstants {
    fn from(b: BandBlock) -> Self {
        BandConstants { gamma: b.gamma.0, sigma: b.sigma.0, eta: b.eta.0, theta: b.theta.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairBlock {
    pub q_minus: Scalar,
    pub q_plus: Scalar,
    pub lower: BandBlock,
    pub upper: BandBlock,
    pub alpha_gap: Scalar,
    pub beta_gap: Scalar,
    pub m_max: usize,
    /// Ordering grid spacing.
    pub ordering_step: Scalar,
}

impl Default for PairBlock {
    fn default() -> Self {
        let d = PairParams::default();
        PairBlock {
            q_minus: d.q_minus.into(),
            q_plus: d.q_plus.into(),
            lower: d.lower.into(),
            upper: d.upper.into(),
            alpha_gap: d.alpha_gap.into(),
            beta_gap: d.beta_gap.into(),
            m_max: d.m_max,
            ordering_step: Scalar(std::f64::consts::PI / 100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Slack,
    PositiveLobe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaBlock {
    /// User forcing; the built example is used when absent.
    pub q: Option<String>,
    /// Periods checked for a user forcing (nodes `mπ` from `2π`).
    pub periods: usize,
    pub strategy: StrategySpec,
    pub finite_tol: Scalar,
    pub tail_tol: Scalar,
}

impl Default for LemmaBlock {
    fn default() -> Self {
        LemmaBlock {
            q: None,
            periods: 25,
            strategy: StrategySpec::Slack,
            finite_tol: Scalar(oscillax::quadrature::DEFAULT_FINITE_TOL),
            tail_tol: Scalar(oscillax::quadrature::DEFAULT_TAIL_TOL),
        }
    }
}

impl LemmaBlock {
    pub fn strategy(&self) -> EpsilonStrategy {
        match self.strategy {
            StrategySpec::Slack => EpsilonStrategy::Slack,
            StrategySpec::PositiveLobe => EpsilonStrategy::PositiveLobe,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    pub step: Scalar,
    pub span: Scalar,
    pub tol: Scalar,
    pub max_substep: Scalar,
    pub oracle_tol: Scalar,
    /// Grid spacing for the finite-difference residual of `h`.
    pub residual_step: Scalar,
}

impl Default for KernelBlock {
    fn default() -> Self {
        KernelBlock {
            step: Scalar(std::f64::consts::PI / 200.0),
            span: Scalar(40.0 * std::f64::consts::PI),
            tol: Scalar(1e-10),
            max_substep: Scalar(0.05),
            oracle_tol: Scalar(1e-9),
            residual_step: Scalar(1e-3),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureBlock {
    pub periods: usize,
    pub varsigma: Scalar,
}

impl Default for FeatureBlock {
    fn default() -> Self {
        FeatureBlock { periods: 50, varsigma: Scalar(1.0) }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Lower,
    Upper,
    TanhBlend { width_fraction: Scalar },
}

impl NonlinearitySpec {
    pub fn nonlinearity(&self) -> Nonlinearity {
        match *self {
            NonlinearitySpec::Lower => Nonlinearity::Lower,
            NonlinearitySpec::Upper => Nonlinearity::Upper,
            NonlinearitySpec::TanhBlend { width_fraction } => Nonlinearity::TanhBlend { width_fraction: width_fraction.0 },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeBlock {
    pub n: u32,
    pub r_inner: Scalar,
    pub g: String,
    pub g_tail: TailSpec,
    pub nonlinearity: NonlinearitySpec,
    pub varsigma: Scalar,
    pub growth_radii: Vec<Scalar>,
    /// Spacing of the barrier and solver grid.
    pub step: Scalar,
    pub span: Scalar,
    pub residual_tol: Scalar,
    /// Also check residual signs at half the spacing.
    pub refine: bool,
}

impl Default for BridgeBlock {
    fn default() -> Self {
        BridgeBlock {
            n: 3,
            r_inner: Scalar(1.0),
            g: "1/r^4".into(),
            g_tail: TailSpec::Power { exponent: Scalar(4.0), constant: Scalar(1.0) },
            nonlinearity: NonlinearitySpec::TanhBlend { width_fraction: Scalar(0.25) },
            varsigma: Scalar(1.0),
            growth_radii: vec![Scalar(1e2), Scalar(1e3), Scalar(1e4)],
            step: Scalar(1e-3),
            span: Scalar(40.0 * std::f64::consts::PI),
            residual_tol: Scalar(1e-6),
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSpec {
    Named(ShiftName),
    Fixed(Scalar),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftName {
    Auto,
    Lipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSpec {
    Supersolution,
    Subsolution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpBlock {
    pub tol: Scalar,
    pub max_iterations: usize,
    pub shift: ShiftSpec,
    pub trace: TraceSpec,
    pub fit_window: Scalar,
    pub boundary_layer: Scalar,
}

impl Default for BvpBlock {
    fn default() -> Self {
        BvpBlock {
            tol: Scalar(1e-10),
            max_iterations: 500,
            shift: ShiftSpec::Named(ShiftName::Auto),
            trace: TraceSpec::Supersolution,
            fit_window: Scalar(0.3),
            boundary_layer: Scalar(0.05),
        }
    }
}

impl BvpBlock {
    pub fn shift(&self) -> ShiftChoice {
        match self.shift {
            ShiftSpec::Named(ShiftName::Auto) => ShiftChoice::Auto,
            ShiftSpec::Named(ShiftName::Lipschitz) => ShiftChoice::Lipschitz,
            ShiftSpec::Fixed(k) => ShiftChoice::Fixed(k.0),
        }
    }

    pub fn trace(&self) -> BoundaryTrace {
        match self.trace {
            TraceSpec::Supersolution => BoundaryTrace::Supersolution,
            TraceSpec::Subsolution => BoundaryTrace::Subsolution,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the mode given on the command line.
    pub mode: Option<Mode>,
    pub oscillation: OscillationBlock,
    pub pair: PairBlock,
    pub lemma: LemmaBlock,
    pub kernel: KernelBlock,
    pub features: FeatureBlock,
    pub bridge: BridgeBlock,
    pub bvp: BvpBlock,
}

fn positive(name: &str, x: Scalar) -> Result<(), RunError> {
    if x.0 > 0.0 && x.0.is_finite() {
        Ok(())
    } else {
        Err(RunError::Config(format!("{name} must be positive and finite, got {}", x.0)))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, RunError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    /// Tolerances, spacings and expressions; the parameter constraints are
    /// checked by the builders.
    pub fn validate(&self) -> Result<(), RunError> {
        let k = &self.kernel;
        for (name, v) in [
            ("kernel.step", k.step),
            ("kernel.span", k.span),
            ("kernel.tol", k.tol),
            ("kernel.max_substep", k.max_substep),
            ("kernel.oracle_tol", k.oracle_tol),
            ("kernel.residual_step", k.residual_step),
            ("lemma.finite_tol", self.lemma.finite_tol),
            ("lemma.tail_tol", self.lemma.tail_tol),
            ("pair.ordering_step", self.pair.ordering_step),
            ("features.varsigma", self.features.varsigma),
            ("bridge.r_inner", self.bridge.r_inner),
            ("bridge.varsigma", self.bridge.varsigma),
            ("bridge.step", self.bridge.step),
            ("bridge.span", self.bridge.span),
            ("bridge.residual_tol", self.bridge.residual_tol),
            ("bvp.tol", self.bvp.tol),
            ("bvp.fit_window", self.bvp.fit_window),
        ] {
            positive(name, v)?;
        }
        for (i, r) in self.bridge.growth_radii.iter().enumerate() {
            positive(&format!("bridge.growth_radii[{i}]"), *r)?;
        }
        if self.bridge.growth_radii.len() < 2 {
            return Err(RunError::Config("bridge.growth_radii needs at least two radii".into()));
        }
        if self.bvp.boundary_layer.0 < 0.0 || self.bvp.fit_window.0 + self.bvp.boundary_layer.0 > 1.0 {
            return Err(RunError::Config("bvp.fit_window + bvp.boundary_layer must lie in (0, 1]".into()));
        }
        if self.features.periods < 2 || self.lemma.periods < 2 {
            return Err(RunError::Config("features.periods and lemma.periods must be at least 2".into()));
        }
        if self.bvp.max_iterations == 0 {
            return Err(RunError::Config("bvp.max_iterations must be positive".into()));
        }
        if let ShiftSpec::Fixed(k) = self.bvp.shift {
            if !(k.0 >= 0.0 && k.0.is_finite()) {
                return Err(RunError::Config(format!("bvp.shift must be nonnegative, got {}", k.0)));
            }
        }
        self.p_expr()?;
        self.g_expr()?;
        if let Some(q) = &self.lemma.q {
            parse_expr("lemma.q", q)?;
        }
        Ok(())
    }

    pub fn p_expr(&self) -> Result<CoefficientExpr, RunError> {
        parse_expr("oscillation.p", &self.oscillation.p)
    }

    pub fn g_expr(&self) -> Result<CoefficientExpr, RunError> {
        parse_expr("bridge.g", &self.bridge.g)
    }

    pub fn oscillation_params(&self) -> Result<OscillationParams, RunError> {
        let o = &self.oscillation;
        Ok(OscillationParams {
            q_minus: o.q_minus.0,
            q_plus: o.q_plus.0,
            gamma: o.gamma.0,
            sigma: o.sigma.0,
            eta: o.eta.0,
            theta: o.theta.0,
            p: self.p_expr()?,
            p_tail: o.p_tail.model(),
            m_max: o.m_max,
            c_position: o.c_position.0,
            d_position: o.d_position.0,
            ..OscillationParams::default()
        })
    }

    pub fn pair_params(&self, m_max: usize) -> Result<PairParams, RunError> {
        let b = &self.pair;
        Ok(PairParams {
            q_minus: b.q_minus.0,
            q_plus: b.q_plus.0,
            p: self.p_expr()?,
            p_tail: self.oscillation.p_tail.model(),
            lower: b.lower.into(),
            upper: b.upper.into(),
            alpha_gap: b.alpha_gap.0,
            beta_gap: b.beta_gap.0,
            m_max,
            ..PairParams::default()
        })
    }
}

fn parse_expr(field: &str, source: &str) -> Result<CoefficientExpr, RunError> {
    CoefficientExpr::parse(source).map_err(|e| RunError::Config(format!("{field}: {e}")))
}
