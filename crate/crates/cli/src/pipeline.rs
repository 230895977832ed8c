//! Stages behind each mode and the files they emit.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use oscillax::bridge::{
    build_barrier, integral_conditions, push_a_from_q, subsuper_residual, BarrierPair, BridgeError, ConditionReport, LiftedQ,
    RadialMap, RadialProblem, SubSuperReport,
};
use oscillax::bvp::{decay_fit, solve_radial, BvpError, BvpOptions, BvpSolution, MONOTONE_TOL};
use oscillax::dsl::Coefficient;
use oscillax::example::{
    build_oscillation, build_pair, check_integral_features, verify_pair, ExampleError, OscillationPair, OscillationSpec,
};
use oscillax::kernel::{self, KernelError, KernelOptions, KernelPair};
use oscillax::lemma::{
    check_conclusions, check_hypotheses, check_remark, Check, EpsilonStrategy, LemmaError, LemmaOptions, LemmaReport,
    NodeSequence,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::output::{write_csv, write_json, Table};
use crate::plot::{emit_plot, PlotOptions, Series};
use crate::RunError;

/// Largest allowed sup difference between the quadrature and ODE kernels.
pub const ORACLE_AGREEMENT: f64 = 1e-6;
/// Largest allowed finite-difference residual of `h`.
pub const KERNEL_RESIDUAL: f64 = 1e-4;
/// Largest allowed relative deviation of the bridge round trips.
pub const ROUND_TRIP_TOL: f64 = 1e-12;
/// Allowed distance of the fitted decay exponent from `-(n-2)`.
pub const DECAY_TOL: f64 = 0.15;

/// One failed check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub stage: String,
    pub check: String,
    pub margin: f64,
    pub details: String,
}

impl Failure {
    pub fn new(stage: &str, check: &str, margin: f64, details: impl Into<String>) -> Failure {
        Failure { stage: stage.into(), check: check.into(), margin, details: details.into() }
    }
}

fn failures_of(stage: &str, checks: &[Check]) -> Vec<Failure> {
    checks.iter().filter(|c| !c.pass).map(|c| Failure::new(stage, &c.name, c.margin, c.details.clone())).collect()
}

fn check(stage: &str, name: &str, pass: bool, margin: f64, details: impl Into<String>) -> Option<Failure> {
    (!pass).then(|| Failure::new(stage, name, margin, details))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { csv: true, json: true, svg: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub formats: Formats,
    pub parallel: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub failures: Vec<Failure>,
}

/// Files produced by a run before they are written.
#[derive(Default)]
struct Artifacts {
    json: Vec<(&'static str, Value)>,
    csv: Vec<(&'static str, Table)>,
    svg: Vec<(&'static str, Vec<Series>, PlotOptions)>,
    failures: Vec<Failure>,
}

impl Artifacts {
    fn merge(&mut self, other: Artifacts) {
        self.json.extend(other.json);
        self.csv.extend(other.csv);
        self.svg.extend(other.svg);
        self.failures.extend(other.failures);
    }
}

fn internal(e: impl std::fmt::Display) -> RunError {
    RunError::Internal(e.to_string())
}

fn to_json<T: Serialize>(x: &T) -> Result<Value, RunError> {
    serde_json::to_value(x).map_err(internal)
}

fn example_error(stage: &str, e: ExampleError) -> RunError {
    match e {
        ExampleError::Invalid(_) | ExampleError::LambdaTooLarge(_) | ExampleError::EmptyBand { .. } => {
            RunError::Config(e.to_string())
        }
        ExampleError::ChainViolation { ref link, margin, .. } => {
            RunError::Check(vec![Failure::new(stage, link, margin, e.to_string())])
        }
        ExampleError::Lemma(e) => lemma_error(e),
        other => internal(other),
    }
}

fn lemma_error(e: LemmaError) -> RunError {
    match e {
        LemmaError::Nodes(_) => RunError::Config(e.to_string()),
        other => internal(other),
    }
}

fn kernel_error(e: KernelError) -> RunError {
    match e {
        KernelError::NegativeP { .. } | KernelError::GridTooShort { .. } => RunError::Config(e.to_string()),
        other => internal(other),
    }
}

fn bridge_error(e: BridgeError) -> RunError {
    match e {
        BridgeError::Invalid(_)
        | BridgeError::BelowStart { .. }
        | BridgeError::BelowStartRadius { .. }
        | BridgeError::NegativeG { .. }
        | BridgeError::RibbonEscape { .. } => RunError::Config(e.to_string()),
        BridgeError::Hypotheses { which, .. } => {
            RunError::Check(vec![Failure::new("bridge", &format!("{which}_hypotheses"), 0.0, e.to_string())])
        }
        BridgeError::Kernel(k) => kernel_error(k),
        BridgeError::Lemma(l) => lemma_error(l),
        other => internal(other),
    }
}

fn bvp_error(e: BvpError) -> RunError {
    match e {
        BvpError::NonMonotone { rise, .. } => RunError::Check(vec![Failure::new("bvp", "bvp_monotone", -rise, e.to_string())]),
        BvpError::NoConvergence { last, .. } => {
            RunError::Check(vec![Failure::new("bvp", "bvp_convergence", -last, e.to_string())])
        }
        BvpError::SandwichViolated { lower, upper } => {
            RunError::Check(vec![Failure::new("bvp", "bvp_sandwich", lower.min(upper), e.to_string())])
        }
        BvpError::Invalid(_) | BvpError::CoarseGrid { .. } => RunError::Config(e.to_string()),
        BvpError::Bridge(b) => bridge_error(b),
        other => internal(other),
    }
}

/// Uniform grid with `round(span/step)` cells from `s0`.
pub fn grid_on(s0: f64, span: f64, step: f64) -> Vec<f64> {
    let cells = ((span / step).round() as usize).max(2);
    kernel::uniform_grid(s0, s0 + span, cells)
}

fn lemma_options(cfg: &RunConfig, base: LemmaOptions) -> LemmaOptions {
    let strategy = cfg.lemma.strategy();
    LemmaOptions {
        finite_tol: cfg.lemma.finite_tol.0,
        tail_tol: cfg.lemma.tail_tol.0,
        strategy,
        epsilon_remainder: if strategy == EpsilonStrategy::Slack { base.epsilon_remainder } else { None },
    }
}

fn kernel_options(cfg: &RunConfig) -> KernelOptions {
    KernelOptions { tol: cfg.kernel.tol.0, max_substep: cfg.kernel.max_substep.0, ..KernelOptions::default() }
}

/// Lemma, kernel and feature results for the built example or a user `q`.
struct FamilyOutput {
    spec: Option<OscillationSpec>,
    lemma: LemmaReport,
    kernel: Option<KernelPair>,
    kernel_summary: Value,
    features: Value,
    failures: Vec<Failure>,
}

fn family_stage(cfg: &RunConfig, with_kernel: bool, with_features: bool) -> Result<FamilyOutput, RunError> {
    let p = cfg.p_expr()?;
    let p_tail = cfg.oscillation.p_tail.model();
    let (spec, q, nodes, opts) = match &cfg.lemma.q {
        Some(text) => {
            let q = oscillax::CoefficientExpr::parse(text).map_err(|e| RunError::Config(format!("lemma.q: {e}")))?;
            let nodes = NodeSequence::multiples_of_pi(cfg.lemma.periods).map_err(lemma_error)?;
            (None, q, nodes, lemma_options(cfg, LemmaOptions::default()))
        }
        None => {
            let spec = build_oscillation(cfg.oscillation_params()?).map_err(|e| example_error("example", e))?;
            let base = spec.lemma_options().map_err(|e| example_error("example", e))?;
            let opts = lemma_options(cfg, base);
            (Some(spec.clone()), spec.q.clone(), spec.nodes.clone(), opts)
        }
    };
    let hyp = check_hypotheses(&p, &p_tail, &q, &nodes, &opts).map_err(lemma_error)?;
    let mut failures = failures_of("lemma", &hyp.checks);
    let remark = match &spec {
        Some(spec) => {
            let r = check_remark(&p, &p_tail, &nodes, spec.params.q_minus, hyp.epsilon_sum, &opts).map_err(lemma_error)?;
            failures.extend(failures_of("lemma", &r.checks));
            Some(r)
        }
        None => None,
    };

    let mut kernel_pair = None;
    let mut conclusions = None;
    let mut kernel_summary = Value::Null;
    if with_kernel && hyp.all_pass() {
        let kopts = kernel_options(cfg);
        let grid = grid_on(nodes.start(), cfg.kernel.span.0, cfg.kernel.step.0);
        let pair = kernel::build(&p, &q, &grid, hyp.lambda, Some(hyp.z_sup_bound()), &kopts).map_err(kernel_error)?;
        let conc = check_conclusions(&pair, &nodes).map_err(lemma_error)?;
        failures.extend(failures_of("kernel", &conc.checks));

        let oracle = kernel::z_ode_oracle(&p, &q, &grid, cfg.kernel.oracle_tol.0, kopts.max_substep).map_err(kernel_error)?;
        let oracle_diff = pair.z_values.iter().zip(&oracle.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        failures.extend(check(
            "kernel",
            "kernel_oracle_agreement",
            oracle_diff <= ORACLE_AGREEMENT,
            ORACLE_AGREEMENT - oracle_diff,
            format!("sup |z_quad - z_ode| = {oracle_diff:.3e}"),
        ));

        let fine = grid_on(nodes.start(), cfg.kernel.span.0, cfg.kernel.residual_step.0);
        let fine_pair = kernel::build(&p, &q, &fine, hyp.lambda, Some(hyp.z_sup_bound()), &kopts).map_err(kernel_error)?;
        let residual =
            kernel::ode_residual(&fine_pair.h_values, &p, &q, &fine, Some(&fine_pair.z_values)).map_err(kernel_error)?;
        failures.extend(check(
            "kernel",
            "kernel_residual",
            residual.sup <= KERNEL_RESIDUAL,
            KERNEL_RESIDUAL - residual.sup,
            format!("sup residual {:.3e} at spacing {}", residual.sup, cfg.kernel.residual_step.0),
        ));

        kernel_summary = json!({
            "grid": {"s0": grid[0], "s_end": grid[grid.len() - 1], "cells": grid.len() - 1},
            "lambda": pair.lambda,
            "z_sup_bound": pair.z_sup_bound,
            "tail_estimate": pair.tail_estimate,
            "tail_bound": pair.tail_bound,
            "h_at_s0": pair.h_values[0],
            "oracle_sup_diff": oracle_diff,
            "residual": to_json(&residual)?,
            "residual_cells": fine.len() - 1,
        });
        kernel_pair = Some(pair);
        conclusions = Some(conc);
    }

    let mut features = Value::Null;
    if let (true, Some(spec)) = (with_features, &spec) {
        let periods = cfg.features.periods;
        let wide = if spec.params.m_max >= periods {
            spec.clone()
        } else {
            let params = oscillax::example::OscillationParams { m_max: periods, ..spec.params.clone() };
            build_oscillation(params).map_err(|e| example_error("features", e))?
        };
        let report = check_integral_features(&wide, cfg.features.varsigma.0, periods).map_err(|e| example_error("features", e))?;
        failures.extend(failures_of("features", &report.checks));
        features = to_json(&report)?;
    }

    Ok(FamilyOutput {
        spec,
        lemma: LemmaReport { hypotheses: Some(hyp), conclusions, remark },
        kernel: kernel_pair,
        kernel_summary,
        features,
        failures,
    })
}

fn kernels_table(pair: &KernelPair) -> Table {
    Table::new(vec![
        ("s", pair.grid.clone()),
        ("z", pair.z_values.clone()),
        ("h", pair.h_values.clone()),
        ("h_over_s", pair.h_over_s()),
    ])
}

fn z_plot(pair: &KernelPair) -> (Vec<Series>, PlotOptions) {
    (
        vec![Series { name: "z".into(), x: pair.grid.clone(), y: pair.z_values.clone() }],
        PlotOptions { title: "z(s)".into(), x_label: "s".into(), y_label: "z".into(), ..PlotOptions::default() },
    )
}

fn family_artifacts(cfg: &RunConfig, mode: Mode) -> Result<Artifacts, RunError> {
    let with_features = matches!(mode, Mode::VerifyLemma | Mode::FullPipeline);
    let out = family_stage(cfg, true, with_features)?;
    let mut art = Artifacts { failures: out.failures, ..Artifacts::default() };
    let example = match &out.spec {
        Some(spec) => json!({
            "params": to_json(&spec.params)?,
            "c": spec.c,
            "d": spec.d,
            "lambda": spec.lambda,
            "sup_bound": spec.sup_bound,
            "smoothness": to_json(&spec.smoothness)?,
        }),
        None => json!({"q": cfg.lemma.q, "periods": cfg.lemma.periods}),
    };
    let checks = to_json(&out.lemma.checks())?;
    let report = json!({
        "example": example,
        "lemma": to_json(&out.lemma)?,
        "kernel": out.kernel_summary,
        "features": out.features,
        "checks": checks,
    });
    let name = if mode == Mode::ComputeKernel { "kernel_report.json" } else { "lemma_report.json" };
    art.json.push((name, report));
    if let Some(pair) = &out.kernel {
        art.csv.push(("kernels.csv", kernels_table(pair)));
        let (series, opts) = z_plot(pair);
        art.svg.push(("z.svg", series, opts));
    }
    Ok(art)
}

fn example_artifacts(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let params = cfg.oscillation_params()?;
    let periods = cfg.features.periods;
    let spec = build_oscillation(params.clone()).map_err(|e| example_error("example", e))?;
    let wide = if spec.params.m_max >= periods {
        spec.clone()
    } else {
        build_oscillation(oscillax::example::OscillationParams { m_max: periods, ..params })
            .map_err(|e| example_error("example", e))?
    };
    let features = check_integral_features(&wide, cfg.features.varsigma.0, periods).map_err(|e| example_error("features", e))?;
    let mut failures = failures_of("features", &features.checks);
    failures.extend(check(
        "example",
        "q_smooth",
        spec.smoothness.smooth,
        -spec.smoothness.max_value_jump.max(spec.smoothness.max_slope_jump),
        format!("value jump {:.3e}, slope jump {:.3e}", spec.smoothness.max_value_jump, spec.smoothness.max_slope_jump),
    ));
    failures.extend(check(
        "example",
        "q_sup_bound",
        spec.max_sampled_abs_q <= spec.sup_bound,
        spec.sup_bound - spec.max_sampled_abs_q,
        format!("sampled sup |q| = {:.6e}, bound {:.6e}", spec.max_sampled_abs_q, spec.sup_bound),
    ));
    let (positive, negative) = spec.expected_lobes();
    let grid = grid_on(spec.nodes.start(), spec.nodes.end() - spec.nodes.start(), cfg.kernel.step.0);
    let q = spec.q.eval_grid(&grid).map_err(internal)?;
    let report = json!({
        "spec": to_json(&spec)?,
        "expected_positive_lobes": positive,
        "expected_negative_lobes": negative,
        "features": to_json(&features)?,
    });
    Ok(Artifacts {
        json: vec![("example_report.json", report)],
        csv: vec![("q.csv", Table::new(vec![("s", grid.clone()), ("q", q.clone())]))],
        svg: vec![(
            "q.svg",
            vec![Series { name: "q".into(), x: grid, y: q }],
            PlotOptions { title: "q(s)".into(), x_label: "s".into(), y_label: "q".into(), ..PlotOptions::default() },
        )],
        failures,
    })
}

fn pair_stage(cfg: &RunConfig) -> Result<(OscillationPair, Artifacts), RunError> {
    let pair = build_pair(cfg.pair_params(cfg.pair.m_max)?).map_err(|e| example_error("pair", e))?;
    let s0 = pair.lower.nodes.start();
    let grid = grid_on(s0, pair.lower.nodes.end() - s0, cfg.pair.ordering_step.0);
    let ordering = verify_pair(&pair.lower, &pair.upper, &grid).map_err(|e| example_error("pair", e))?;
    let mut failures: Vec<Failure> = pair
        .report
        .links
        .iter()
        .chain(&pair.report.ordering)
        .filter(|l| l.min_margin < 0.0)
        .map(|l| Failure::new("pair", &l.name, l.min_margin, format!("worst at m = {}", l.worst_m)))
        .collect();
    failures.extend(check(
        "pair",
        "pair_smallness",
        pair.report.smallness_margin > 0.0,
        pair.report.smallness_margin,
        format!("left side {:.6e}", pair.report.smallness_lhs),
    ));
    failures.extend(check(
        "pair",
        "pair_pointwise_ordering",
        ordering.pass,
        ordering.min_slack,
        format!("min q2 - q1 = {:.3e} at s = {}", ordering.min_slack, ordering.min_slack_at),
    ));
    let report = json!({
        "report": to_json(&pair.report)?,
        "ordering": to_json(&ordering)?,
        "ordering_step": cfg.pair.ordering_step.0,
        "lower": {"c": pair.lower.c, "d": pair.lower.d, "sup_bound": pair.lower.sup_bound},
        "upper": {"c": pair.upper.c, "d": pair.upper.d, "sup_bound": pair.upper.sup_bound},
        "alpha_gap": cfg.pair.alpha_gap.0,
        "beta_gap": cfg.pair.beta_gap.0,
        "m_max": cfg.pair.m_max,
    });
    let art = Artifacts { json: vec![("pair_report.json", report)], failures, ..Artifacts::default() };
    Ok((pair, art))
}

fn radial_problem(cfg: &RunConfig, pair: &OscillationPair, s_end: f64) -> Result<RadialProblem, RunError> {
    let b = &cfg.bridge;
    let map = RadialMap::new(b.n, b.r_inner.0, pair.lower.nodes.start()).map_err(bridge_error)?;
    let q1: Arc<dyn Coefficient> = Arc::new(pair.lower.q.clone());
    let q2: Arc<dyn Coefficient> = Arc::new(pair.upper.q.clone());
    RadialProblem::new(
        map,
        s_end,
        Arc::new(cfg.g_expr()?),
        b.g_tail.model(),
        Arc::new(push_a_from_q(q1, map)),
        Arc::new(push_a_from_q(q2, map)),
        b.nonlinearity.nonlinearity(),
        b.varsigma.0,
    )
    .map_err(bridge_error)
}

/// Largest relative deviation of `β⁻¹∘β` and of lifting a pushed forcing,
/// for `n = 3..=6` on `[s0, s_end]`.
pub fn round_trip_deviation(pair: &OscillationPair, r_inner: f64, s_end: f64) -> Result<f64, RunError> {
    let s0 = pair.lower.nodes.start();
    let q: Arc<dyn Coefficient> = Arc::new(pair.upper.q.clone());
    let samples: Vec<f64> = (0..=1000).map(|j| s0 * (s_end / s0).powf(j as f64 / 1000.0)).collect();
    let q_sup = samples.iter().map(|&s| q.value(s).map(f64::abs)).collect::<Result<Vec<_>, _>>().map_err(internal)?;
    let q_sup = q_sup.into_iter().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for n in 3..=6 {
        let map = RadialMap::new(n, r_inner, s0).map_err(bridge_error)?;
        let lifted = LiftedQ { map, a: Arc::new(push_a_from_q(q.clone(), map)) };
        for &s in &samples {
            let back = map.beta_inverse(map.beta(s).map_err(bridge_error)?).map_err(bridge_error)?;
            worst = worst.max((back - s).abs() / s);
            let direct = q.value(s).map_err(internal)?;
            let round = lifted.value(s).map_err(internal)?;
            worst = worst.max((round - direct).abs() / q_sup);
        }
    }
    Ok(worst)
}

fn residual_json(r: &SubSuperReport) -> Value {
    json!({
        "step": r.step,
        "min_rho_lower": r.min_rho_lower,
        "max_rho_upper": r.max_rho_upper,
        "tolerance": r.tolerance,
        "subsolution": r.subsolution,
        "supersolution": r.supersolution,
    })
}

fn residual_failures(r: &SubSuperReport, label: &str) -> Vec<Failure> {
    let mut out = Vec::new();
    out.extend(check(
        "bridge",
        &format!("barrier_subsolution{label}"),
        r.subsolution,
        r.min_rho_lower + r.tolerance,
        format!("min rho_1 = {:.3e} at spacing {:.3e}", r.min_rho_lower, r.step),
    ));
    out.extend(check(
        "bridge",
        &format!("barrier_supersolution{label}"),
        r.supersolution,
        r.tolerance - r.max_rho_upper,
        format!("max rho_2 = {:.3e} at spacing {:.3e}", r.max_rho_upper, r.step),
    ));
    out
}

/// Pair, radial problem and barrier on the solver grid.
pub struct BridgeOutput {
    pub pair: OscillationPair,
    pub problem: RadialProblem,
    pub barrier: BarrierPair,
    artifacts: Artifacts,
}

fn growth_conditions(cfg: &RunConfig, problem: &RadialProblem) -> Result<(ConditionReport, usize), RunError> {
    let radii: Vec<f64> = cfg.bridge.growth_radii.iter().map(|r| r.0).collect();
    let t_max = radii.iter().copied().fold(0.0f64, f64::max);
    let s_t = problem.map.beta_inverse(t_max).map_err(bridge_error)?;
    let s0 = problem.map.s0;
    let m_max = ((s_t - s0) / (2.0 * PI)).ceil().max(1.0) as usize + 1;
    let wide = build_pair(cfg.pair_params(m_max)?).map_err(|e| example_error("bridge", e))?;
    let wide_problem = radial_problem(cfg, &wide, s_t.max(problem.s_end))?;
    let report = integral_conditions(&wide_problem, &radii, [wide.lower.sup_bound, wide.upper.sup_bound], 1e-10)
        .map_err(bridge_error)?;
    Ok((report, m_max))
}

fn bridge_stage(cfg: &RunConfig, pair: OscillationPair, parallel: bool) -> Result<BridgeOutput, RunError> {
    let b = &cfg.bridge;
    let s0 = pair.lower.nodes.start();
    let s_end = s0 + b.span.0;
    let problem = radial_problem(cfg, &pair, s_end)?;
    let cells = ((b.span.0 / b.step.0).round() as usize).max(2);
    let refine = if b.refine { 2 } else { 1 };
    let fine_grid = kernel::uniform_grid(s0, s_end, refine * cells);
    let o1 = lemma_options(cfg, pair.lower.lemma_options().map_err(|e| example_error("bridge", e))?);
    let o2 = lemma_options(cfg, pair.upper.lemma_options().map_err(|e| example_error("bridge", e))?);
    let kopts = kernel_options(cfg);

    let build = || build_barrier(&problem, &pair.lower.nodes, [&o1, &o2], &fine_grid, &kopts).map_err(bridge_error);
    let conditions = || growth_conditions(cfg, &problem);
    let (built, conditions) = if parallel {
        std::thread::scope(|scope| {
            let handle = scope.spawn(conditions);
            let built = build();
            (built, handle.join().unwrap_or_else(|_| Err(RunError::Internal("integral conditions panicked".into()))))
        })
    } else {
        (build(), conditions())
    };
    let (fine, hyps) = built?;
    let (conditions, growth_m_max) = conditions?;
    let barrier = fine.subsample(refine);

    let tol = b.residual_tol.0;
    let residual = subsuper_residual(&barrier, &problem, tol).map_err(bridge_error)?;
    let mut failures = residual_failures(&residual, "");
    let refined = if b.refine {
        let r = subsuper_residual(&fine, &problem, tol).map_err(bridge_error)?;
        failures.extend(residual_failures(&r, "_refined"));
        residual_json(&r)
    } else {
        Value::Null
    };
    let ordering = barrier.ordering();
    failures.extend(check(
        "bridge",
        "barrier_ordering",
        ordering.pass,
        ordering.min_gap.min(ordering.min_v1),
        format!("min v2 - v1 = {:.3e}, min v1 = {:.3e}", ordering.min_gap, ordering.min_v1),
    ));
    failures.extend(failures_of("bridge", &conditions.checks));
    let round_trip = round_trip_deviation(&pair, b.r_inner.0, s_end)?;
    failures.extend(check(
        "bridge",
        "bridge_round_trip",
        round_trip <= ROUND_TRIP_TOL,
        ROUND_TRIP_TOL - round_trip,
        format!("max relative deviation {round_trip:.3e} for n = 3..6"),
    ));

    let map = problem.map;
    let hypotheses: Vec<Value> = hyps
        .iter()
        .map(|h| {
            json!({
                "lambda": h.lambda,
                "epsilon_sum": h.epsilon_sum,
                "delta": h.delta,
                "z_sup_bound": h.z_sup_bound(),
                "all_pass": h.all_pass(),
            })
        })
        .collect();
    let report = json!({
        "map": {
            "n": map.n,
            "r_inner": map.r_inner,
            "s0": map.s0,
            "start_radius": map.start_radius(),
            "s_end": s_end,
            "r_end": map.beta(s_end).map_err(bridge_error)?,
        },
        "nonlinearity": to_json(&problem.nonlinearity)?,
        "varsigma": problem.varsigma,
        "cells": barrier.grid().len() - 1,
        "hypotheses": hypotheses,
        "ordering": to_json(&ordering)?,
        "residual": residual_json(&residual),
        "residual_refined": refined,
        "conditions": to_json(&conditions)?,
        "conditions_pair_m_max": growth_m_max,
        "round_trip_deviation": round_trip,
    });
    let mut artifacts = Artifacts { json: vec![("bridge_report.json", report)], failures, ..Artifacts::default() };
    let (v1, v2) = (barrier.v1(), barrier.v2());
    let interior = 1..barrier.grid().len() - 1;
    let r: Vec<f64> = residual.s.iter().map(|&s| map.beta(s)).collect::<Result<_, _>>().map_err(bridge_error)?;
    artifacts.csv.push((
        "barrier.csv",
        Table::new(vec![
            ("s", residual.s.clone()),
            ("r", r),
            ("v1", v1[interior.clone()].to_vec()),
            ("v2", v2[interior].to_vec()),
            ("rho1", residual.rho_lower.clone()),
            ("rho2", residual.rho_upper.clone()),
        ]),
    ));
    Ok(BridgeOutput { pair, problem, barrier, artifacts })
}

fn bvp_stage(cfg: &RunConfig, bridge: &BridgeOutput) -> Result<(BvpSolution, Artifacts), RunError> {
    let opts = BvpOptions {
        tol: cfg.bvp.tol.0,
        max_iterations: cfg.bvp.max_iterations,
        shift: cfg.bvp.shift(),
        trace: cfg.bvp.trace(),
        ..BvpOptions::default()
    };
    let sol = solve_radial(&bridge.problem, &bridge.barrier, &opts).map_err(bvp_error)?;
    let slope = decay_fit(&sol.radii, &sol.u_values, cfg.bvp.fit_window.0, cfg.bvp.boundary_layer.0).map_err(bvp_error)?;
    let expected = -(bridge.problem.map.k());
    let residual_bound = 10.0 * opts.tol;
    let monotone = sol.max_rise <= MONOTONE_TOL && sol.deltas_decreasing();
    let failures: Vec<Failure> = [
        check("bvp", "bvp_monotone", monotone, MONOTONE_TOL - sol.max_rise, format!("max rise {:.3e}", sol.max_rise)),
        check(
            "bvp",
            "bvp_sandwich",
            sol.sandwich.pass,
            sol.sandwich.lower_margin.min(sol.sandwich.upper_margin),
            format!("min(u - v1) = {:.3e}, min(v2 - u) = {:.3e}", sol.sandwich.lower_margin, sol.sandwich.upper_margin),
        ),
        check(
            "bvp",
            "bvp_residual",
            sol.residual_sup <= residual_bound,
            residual_bound - sol.residual_sup,
            format!("sup residual {:.3e}", sol.residual_sup),
        ),
        check(
            "bvp",
            "bvp_decay_rate",
            (slope - expected).abs() <= DECAY_TOL,
            DECAY_TOL - (slope - expected).abs(),
            format!("fitted exponent {slope:.5} vs {expected}"),
        ),
    ]
    .into_iter()
    .flatten()
    .collect();

    let (v1, v2) = (bridge.barrier.v1(), bridge.barrier.v2());
    let summary = json!({
        "cells": sol.grid.len() - 1,
        "tol": opts.tol,
        "iterations": sol.iterations,
        "iteration_sup_deltas": sol.iteration_sup_deltas,
        "deltas_decreasing": sol.deltas_decreasing(),
        "initial_rise": sol.initial_rise,
        "max_rise": sol.max_rise,
        "shift": sol.shift,
        "shift_choice": to_json(&opts.shift)?,
        "trace": to_json(&sol.trace)?,
        "residual_sup": sol.residual_sup,
        "sandwich": to_json(&sol.sandwich)?,
        "decay_exponent": slope,
        "expected_decay_exponent": expected,
        "fit_window": cfg.bvp.fit_window.0,
        "boundary_layer": cfg.bvp.boundary_layer.0,
        "u_at_inner": sol.u_values[0],
        "r_start": sol.radii[0],
    });
    let table = Table::new(vec![
        ("s", sol.grid.clone()),
        ("r", sol.radii.clone()),
        ("u", sol.u_values.clone()),
        ("v1", v1.clone()),
        ("v2", v2.clone()),
        ("residual", sol.residual.clone()),
    ]);
    let series = vec![
        Series { name: "u".into(), x: sol.radii.clone(), y: sol.u_values.clone() },
        Series { name: "v1".into(), x: sol.radii.clone(), y: v1 },
        Series { name: "v2".into(), x: sol.radii.clone(), y: v2 },
    ];
    let plot = PlotOptions {
        title: "v1 <= u <= v2".into(),
        x_label: "r".into(),
        y_label: "u".into(),
        log_x: true,
        log_y: true,
    };
    let art = Artifacts {
        json: vec![("bvp_summary.json", summary)],
        csv: vec![("bvp.csv", table)],
        svg: vec![("sandwich.svg", series, plot)],
        failures,
    };
    Ok((sol, art))
}

fn radial_chain(cfg: &RunConfig, mode: Mode, parallel: bool) -> Result<Artifacts, RunError> {
    let (pair, mut art) = pair_stage(cfg)?;
    if mode == Mode::BuildPair {
        return Ok(art);
    }
    let mut bridge = bridge_stage(cfg, pair, parallel)?;
    let mut bridge_art = std::mem::take(&mut bridge.artifacts);
    if mode != Mode::Bridge {
        bridge_art.csv.retain(|(name, _)| *name != "barrier.csv");
    }
    art.merge(bridge_art);
    if mode == Mode::Bridge {
        return Ok(art);
    }
    let (_, bvp_art) = bvp_stage(cfg, &bridge)?;
    art.merge(bvp_art);
    Ok(art)
}

fn collect(cfg: &RunConfig, opts: &RunOptions) -> Result<Artifacts, RunError> {
    match opts.mode {
        Mode::ConstructExample => example_artifacts(cfg),
        Mode::VerifyLemma | Mode::ComputeKernel => family_artifacts(cfg, opts.mode),
        Mode::BuildPair | Mode::Bridge | Mode::SolveBvp => radial_chain(cfg, opts.mode, opts.parallel),
        Mode::FullPipeline => {
            let (family, radial) = if opts.parallel {
                std::thread::scope(|scope| {
                    let handle = scope.spawn(|| family_artifacts(cfg, Mode::FullPipeline));
                    let radial = radial_chain(cfg, Mode::FullPipeline, true);
                    (handle.join().unwrap_or_else(|_| Err(RunError::Internal("family stage panicked".into()))), radial)
                })
            } else {
                (family_artifacts(cfg, Mode::FullPipeline), radial_chain(cfg, Mode::FullPipeline, false))
            };
            let mut art = family?;
            art.merge(radial?);
            Ok(art)
        }
    }
}

fn failures_json(exit_code: i32, message: &str, failures: &[Failure]) -> Value {
    json!({
        "exit_code": exit_code,
        "message": message,
        "failures": failures.iter().map(|f| json!({
            "stage": f.stage,
            "check": f.check,
            "margin": if f.margin.is_finite() { json!(f.margin) } else { Value::Null },
            "details": f.details,
        })).collect::<Vec<_>>(),
    })
}

/// Write `failures.json` into `dir` for a failed run, best effort.
pub fn record_failure(dir: &Path, err: &RunError) {
    if std::fs::create_dir_all(dir).is_ok() {
        let failures = match err {
            RunError::Check(f) => f.as_slice(),
            _ => &[],
        };
        let _ = write_json(&dir.join("failures.json"), &failures_json(err.exit_code(), &err.to_string(), failures));
    }
}

/// Run one mode and write its files. Check failures are returned in the
/// summary (and recorded in `failures.json`); hard errors are returned as
/// `Err` after `failures.json` is written.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let result = run_inner(cfg, opts);
    if let Err(e) = &result {
        record_failure(&opts.out_dir, e);
    }
    result
}

fn run_inner(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    if let Some(mode) = cfg.mode {
        if mode != opts.mode {
            return Err(RunError::Config(format!(
                "config is for mode `{}` but `{}` was requested",
                mode.name(),
                opts.mode.name(),
            )));
        }
    }
    cfg.validate()?;
    let art = collect(cfg, opts)?;
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| RunError::Internal(format!("cannot create {}: {e}", opts.out_dir.display())))?;
    let mut files = Vec::new();
    if opts.formats.json {
        for (name, value) in &art.json {
            let path = opts.out_dir.join(name);
            write_json(&path, value)?;
            files.push(path);
        }
    }
    if opts.formats.csv {
        for (name, table) in &art.csv {
            let path = opts.out_dir.join(name);
            write_csv(&path, table)?;
            files.push(path);
        }
    }
    if opts.formats.svg {
        for (name, series, plot) in &art.svg {
            let path = opts.out_dir.join(name);
            emit_plot(series, plot, &path).map_err(internal)?;
            files.push(path);
        }
    }
    let failures_path = opts.out_dir.join("failures.json");
    if art.failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(internal)?;
        }
    } else {
        let message = format!("{} check(s) failed", art.failures.len());
        write_json(&failures_path, &failures_json(1, &message, &art.failures))?;
        files.push(failures_path);
    }
    Ok(RunSummary { files, failures: art.failures })
}
