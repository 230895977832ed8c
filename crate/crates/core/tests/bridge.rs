use std::f64::consts::PI;
use std::sync::Arc;

use oscillax::bridge::*;
use oscillax::dsl::{from_fn, Coefficient, CoefficientExpr};
use oscillax::example::{build_pair, PairParams};
use oscillax::kernel::KernelPair;
use oscillax::TailModel;

fn quartic_decay() -> Arc<dyn Coefficient> {
    Arc::new(CoefficientExpr::parse("1/r^4").unwrap())
}

#[test]
fn transformation_identity_on_synthetic_profiles() {
    let f = |r: f64, u: f64| r.sin() * u / (1.0 + u * u);
    let profiles: [(&str, fn(f64) -> f64); 3] = [
        ("rational", |s| 1.0 + 1.0 / s),
        ("oscillating", |s| 2.0 + (0.3 * s).sin() / s),
        ("saturating", |s| s / (1.0 + s) + (-0.05 * s).exp()),
    ];
    let g = quartic_decay();
    for n in 3..=5 {
        let map = RadialMap::new(n, 1.0, 4.0).unwrap();
        for (name, h) in profiles {
            for s in [5.0, 12.0, 40.0] {
                let (a1, b1) = transformation_sides(&map, g.as_ref(), f, h, s, 2e-3).unwrap();
                let (a2, b2) = transformation_sides(&map, g.as_ref(), f, h, s, 1e-3).unwrap();
                let (e1, e2) = ((a1 - b1).abs(), (a2 - b2).abs());
                let scale = a2.abs().max(b2.abs()).max(1e-3);
                assert!(e2 <= 1e-4 * scale, "n = {n}, {name}, s = {s}: {a2} vs {b2}");
                // second order: halving the step quarters the mismatch
                if e2 > 1e-8 * scale {
                    assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "n = {n}, {name}, s = {s}: ratio {}", e1 / e2);
                }
            }
        }
    }
}

#[test]
fn round_trip_reproduces_forcing() {
    let pair = build_pair(PairParams::default()).unwrap();
    let q: Arc<dyn Coefficient> = Arc::new(pair.lower.q.clone());
    let s0 = 2.0 * PI;
    for n in 3..=6 {
        let map = RadialMap::new(n, 1.0, s0).unwrap();
        let lifted = LiftedQ { map, a: Arc::new(push_a_from_q(q.clone(), map)) };
        let grid: Vec<f64> = (0..1000).map(|i| s0 + 40.0 * PI * i as f64 / 999.0).collect();
        let sup = grid.iter().map(|&s| q.value(s).unwrap().abs()).fold(0.0, f64::max);
        for &s in &grid {
            let diff = (lifted.value(s).unwrap() - q.value(s).unwrap()).abs();
            assert!(diff <= 1e-12 * sup, "n = {n}, s = {s}: {diff:e}");
            let r = map.beta(s).unwrap();
            assert!((map.beta_inverse(r).unwrap() - s).abs() <= 1e-12 * s);
            if n == 3 {
                assert_eq!(r, s);
            }
        }
    }
}

#[test]
fn quartic_g_lifts_to_cubic_p() {
    let map = RadialMap::new(3, 1.0, 2.0 * PI).unwrap();
    let p = LiftedP { map, g: quartic_decay() };
    for s in [2.0 * PI, 10.0, 100.0] {
        assert!((p.value(s).unwrap() * s.powi(3) - 1.0).abs() < 1e-14);
    }
    let m4 = RadialMap::new(4, 1.0, 3.0).unwrap();
    let p4 = LiftedP { map: m4, g: quartic_decay() };
    // g(√(s/2))/4 = 1/s²
    assert!((p4.value(10.0).unwrap() * 100.0 - 1.0).abs() < 1e-14);
}

fn default_problem(m_max: usize, s_end: f64) -> (RadialProblem, [f64; 2]) {
    let pair = build_pair(PairParams { m_max, ..PairParams::default() }).unwrap();
    let map = RadialMap::new(3, 1.0, 2.0 * PI).unwrap();
    let bounds = [pair.lower.sup_bound, pair.upper.sup_bound];
    let problem = RadialProblem::new(
        map,
        s_end,
        quartic_decay(),
        TailModel::power(4.0, 1.0),
        Arc::new(push_a_from_q(Arc::new(pair.lower.q), map)),
        Arc::new(push_a_from_q(Arc::new(pair.upper.q), map)),
        Nonlinearity::default(),
        1.0,
    )
    .unwrap();
    (problem, bounds)
}

#[test]
fn integral_conditions_of_default_problem() {
    let (problem, bounds) = default_problem(1600, 1e4);
    let report = integral_conditions(&problem, &[1e2, 1e3, 1e4], bounds, 1e-10).unwrap();
    assert!((report.g_moment - 1.0).abs() < 1e-7, "{}", report.g_moment);
    assert!((report.s_moment - 1.0 / (2.0 * PI)).abs() < 1e-7);
    assert!((report.lifted_moment - 1.0 / (2.0 * PI)).abs() < 1e-7);
    for check in &report.checks {
        assert!(check.pass, "{check:?}");
    }
    for table in &report.growth {
        assert!(table.values.windows(2).all(|w| w[1] > w[0]));
        assert!(table.slope > 0.05, "{}", table.slope);
    }
}

#[test]
fn growth_matches_comparison_side() {
    // n = 3: ∫_R^T r|a(r)| dr = ∫_{s0}^T |q(s)|/s ds since a vanishes below s0
    let (problem, bounds) = default_problem(40, 200.0);
    let report = integral_conditions(&problem, &[50.0, 100.0, 200.0], bounds, 1e-11).unwrap();
    let pair = build_pair(PairParams { m_max: 40, ..PairParams::default() }).unwrap();
    let q = &pair.lower.q;
    for (t, value) in report.growth[0].radii.iter().zip(&report.growth[0].values) {
        let direct = oscillax::quadrature::integrate_seeded(
            |s: f64| q.value(s).map(|v| v.abs() / s),
            2.0 * PI,
            *t,
            &q.breakpoints(2.0 * PI, *t),
            1e-12,
        )
        .unwrap();
        assert!((direct.value - value).abs() < 1e-9, "T = {t}: {} vs {value}", direct.value);
    }
}

#[test]
fn ribbon_escape_is_an_error() {
    let (problem, _) = default_problem(25, 2.0 * PI + 40.0 * PI);
    let zero: Arc<dyn Coefficient> = from_fn(|_| 0.0);
    // a1 above a2 leaves no room for f on the positive lobes
    let swapped = RadialProblem { a1: problem.a2.clone(), a2: zero, ..problem.clone() };
    let grid: Vec<f64> = (0..=400).map(|i| 2.0 * PI + 0.01 * i as f64).collect();
    let synthetic = |level: f64| KernelPair {
        grid: grid.clone(),
        z_values: vec![-1.0; grid.len()],
        h_values: grid.iter().map(|s| level * s).collect(),
        lambda: 0.0,
        z_sup_bound: 1.0,
        tail_estimate: 0.0,
        tail_bound: 0.0,
        tail: TailModel::power(2.0, 1.0),
    };
    let barrier = BarrierPair::new(synthetic(0.1), synthetic(0.2)).unwrap();
    assert!(subsuper_residual(&barrier, &problem, 1e-6).is_ok());
    assert!(matches!(subsuper_residual(&barrier, &swapped, 1e-6), Err(BridgeError::RibbonEscape { .. })));
}
