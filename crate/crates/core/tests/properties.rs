mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use oscillax::bridge::{push_a_from_q, LiftedQ, Nonlinearity, RadialMap, RibbonPoint};
use oscillax::dsl::{from_fn, BinOp, Coefficient, CoefficientExpr, Expr, Func};
use oscillax::example::{build_oscillation, build_pair, verify_pair, BandConstants, OscillationParams, PairParams};
use oscillax::kernel::{self, KernelOptions};
use oscillax::lemma::check_hypotheses;
use oscillax::quadrature::integrate_finite;
use proptest::prelude::*;

use common::seeded_runner;

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..10.0).prop_map(|x| Expr::num((x * 100.0).round() / 100.0)),
        Just(Expr::Var),
        Just(Expr::Pi),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), 0usize..5).prop_map(|(a, b, k)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                Expr::binary(op, a, b)
            }),
            (inner.clone(), 0usize..5).prop_map(|(a, k)| {
                Expr::call([Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Abs][k], a)
            }),
            inner.prop_map(Expr::neg),
        ]
    })
}

#[test]
fn printing_and_parsing_are_idempotent() {
    seeded_runner(256)
        .run(&expr_strategy(), |e| {
            let printed = e.to_string();
            let parsed = CoefficientExpr::parse(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
            let again = CoefficientExpr::parse(&parsed.to_string()).unwrap();
            prop_assert_eq!(&parsed, &again);
            prop_assert_eq!(parsed.to_string(), again.to_string());
            for s in [0.5, 1.7, 3.0] {
                match (e.eval(s), parsed.eval(s)) {
                    (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{printed} at {s}: {a} vs {b}"),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{printed} at {s}: {a:?} vs {b:?}"),
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn grid_evaluation_matches_pointwise() {
    let strategy = (expr_strategy(), proptest::collection::vec(0.1f64..20.0, 1..20));
    seeded_runner(128)
        .run(&strategy, |(e, mut grid)| {
            grid.sort_by(f64::total_cmp);
            let c = CoefficientExpr::from_expr(e);
            if let Ok(values) = c.eval_grid(&grid) {
                for (s, v) in grid.iter().zip(values) {
                    prop_assert_eq!(c.eval(*s).unwrap().to_bits(), v.to_bits());
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn quadrature_is_linear_and_additive() {
    let strategy = (-3.0f64..3.0, -3.0f64..3.0, 0.5f64..4.0, 0.0f64..5.0, 0.1f64..5.0, 0.0f64..1.0);
    seeded_runner(128)
        .run(&strategy, |(a, b, w, lo, len, split)| {
            let hi = lo + len;
            let mid = lo + split * len;
            let f = |s: f64| Ok((w * s).sin());
            let g = |s: f64| Ok(s * s / (1.0 + s));
            let tol = 1e-11;
            let rf = integrate_finite(f, lo, hi, tol).unwrap();
            let rg = integrate_finite(g, lo, hi, tol).unwrap();
            let combo = integrate_finite(|s: f64| Ok(a * (w * s).sin() + b * s * s / (1.0 + s)), lo, hi, tol).unwrap();
            let slack = combo.abs_error_estimate + a.abs() * rf.abs_error_estimate + b.abs() * rg.abs_error_estimate + 1e-12;
            prop_assert!((combo.value - (a * rf.value + b * rg.value)).abs() <= slack + 4.0 * tol);
            let left = integrate_finite(f, lo, mid, tol).unwrap();
            let right = integrate_finite(f, mid, hi, tol).unwrap();
            let slack = rf.abs_error_estimate + left.abs_error_estimate + right.abs_error_estimate + 1e-12;
            prop_assert!((rf.value - left.value - right.value).abs() <= slack + 3.0 * tol);
            let pos = integrate_finite(g, lo, hi, tol).unwrap();
            prop_assert!(pos.value >= -pos.abs_error_estimate);
            prop_assert_eq!(rf.tail_bound, 0.0);
            Ok(())
        })
        .unwrap();
}

#[test]
fn kernel_scales_with_forcing() {
    let p = CoefficientExpr::parse("1/s^3").unwrap();
    let grid = kernel::uniform_grid(2.0 * PI, 8.0 * PI, 300);
    seeded_runner(16)
        .run(&(0.1f64..10.0, 0.5f64..3.0), |(c, w)| {
            let q = CoefficientExpr::parse(&format!("sin({w}*s)/s")).unwrap();
            let cq = CoefficientExpr::parse(&format!("{c}*(sin({w}*s)/s)")).unwrap();
            let opts = KernelOptions::default();
            let a = kernel::build(&p, &q, &grid, 0.0, Some(1.0), &opts).unwrap();
            let b = kernel::build(&p, &cq, &grid, 0.0, Some(c), &opts).unwrap();
            prop_assert_eq!(a.z_values[0], 0.0);
            for (xs, ys) in [(&a.z_values, &b.z_values), (&a.h_values, &b.h_values)] {
                let sup = ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (x, y) in xs.iter().zip(ys) {
                    prop_assert!((c * x - y).abs() <= 1e-12 * sup, "{x} {y}");
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn lift_inverts_push_in_every_dimension() {
    let strategy = (3u32..=6, 0.5f64..2.0, 0.1f64..3.0, proptest::collection::vec(0.0f64..1.0, 20));
    seeded_runner(64)
        .run(&strategy, |(n, r_inner, w, offsets)| {
            let floor = (n - 2) as f64 * r_inner.powi(n as i32 - 2);
            let s0 = floor + 1.0;
            let map = RadialMap::new(n, r_inner, s0).unwrap();
            let q: Arc<dyn Coefficient> = from_fn(move |s: f64| (w * s).sin() * s.ln());
            let lifted = LiftedQ { map, a: Arc::new(push_a_from_q(q.clone(), map)) };
            let points: Vec<f64> = offsets.iter().map(|t| s0 + 100.0 * t).collect();
            let sup = points.iter().map(|&s| q.value(s).unwrap().abs()).fold(1e-300, f64::max);
            for s in points {
                let diff = (lifted.value(s).unwrap() - q.value(s).unwrap()).abs();
                prop_assert!(diff <= 1e-12 * sup, "n = {n}, s = {s}: {diff:e}");
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn blend_stays_inside_the_ribbon() {
    let strategy = (-5.0f64..5.0, 0.0f64..5.0, -2.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0, 0.05f64..1.0);
    seeded_runner(256)
        .run(&strategy, |(a1, spread, v1, width, t, frac)| {
            let at = RibbonPoint { a1, a2: a1 + spread, v1, v2: v1 + width };
            let blend = Nonlinearity::TanhBlend { width_fraction: frac };
            let f = blend.value(&at, v1 + t * width);
            prop_assert!(f >= at.a1 - 1e-12 && f <= at.a2 + 1e-12);
            prop_assert!(blend.slope(&at, v1 + t * width) >= 0.0);
            Ok(())
        })
        .unwrap();
}

fn admissible_params() -> impl Strategy<Value = OscillationParams> {
    (0.2f64..2.0, 1.1f64..3.0, 6.0f64..9.0, 0.1f64..3.0, 0.0f64..2.0, 0.1f64..2.0, 0.0f64..=1.0, 0.0f64..=1.0, 3usize..8).prop_map(
        |(q_minus, ratio, gamma, sigma_gap, eta, theta_gap, c_position, d_position, m_max)| OscillationParams {
            q_minus,
            q_plus: q_minus * ratio,
            gamma,
            sigma: gamma + sigma_gap,
            eta,
            theta: eta + theta_gap,
            c_position,
            d_position,
            m_max,
            ..OscillationParams::default()
        },
    )
}

#[test]
fn admissible_families_satisfy_the_hypotheses() {
    seeded_runner(24)
        .run(&admissible_params(), |params| {
            let spec = build_oscillation(params).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let opts = spec.lemma_options().unwrap();
            let hyp = check_hypotheses(&spec.params.p, &spec.params.p_tail, &spec.q, &spec.nodes, &opts).unwrap();
            prop_assert!(hyp.all_pass(), "{:?}", hyp.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
            prop_assert!(spec.smoothness.smooth);
            Ok(())
        })
        .unwrap();
}

#[test]
fn admissible_pairs_are_ordered() {
    let strategy = (6.0f64..8.0, 0.1f64..1.0, 0.2f64..1.0, 0.0f64..1.0, 0.1f64..0.9, 0.1f64..0.9);
    seeded_runner(24)
        .run(&strategy, |(gamma, width, gap, eta, alpha_frac, beta_frac)| {
            let lower = BandConstants { gamma, sigma: gamma + width, eta, theta: eta + width };
            let upper = BandConstants {
                gamma: lower.sigma + gap,
                sigma: lower.sigma + gap + width,
                eta: lower.theta + gap,
                theta: lower.theta + gap + width,
            };
            let params = PairParams {
                lower,
                upper,
                alpha_gap: alpha_frac * gap,
                beta_gap: beta_frac * gap,
                m_max: 6,
                ..PairParams::default()
            };
            let pair = build_pair(params).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let grid: Vec<f64> = (0..=1200).map(|i| 2.0 * PI + PI * i as f64 / 100.0).collect();
            let report = verify_pair(&pair.lower, &pair.upper, &grid).unwrap();
            prop_assert!(report.pass, "{report:?}");
            let swapped = verify_pair(&pair.upper, &pair.lower, &grid).unwrap();
            prop_assert!(!swapped.pass);
            Ok(())
        })
        .unwrap();
}
