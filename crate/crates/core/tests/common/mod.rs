#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use oscillax::bridge::{build_barrier, push_a_from_q, BarrierPair, Nonlinearity, RadialMap, RadialProblem};
use oscillax::dsl::{Coefficient, CoefficientExpr};
use oscillax::example::{build_pair, OscillationPair, PairParams};
use oscillax::kernel::{self, KernelOptions};
use oscillax::TailModel;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Property runner seeded from `OSCILLAX_SEED` (default 0).
pub fn seeded_runner(cases: u32) -> TestRunner {
    let seed: u64 = std::env::var("OSCILLAX_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&seed.to_le_bytes());
    }
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &bytes))
}

pub const S0: f64 = 2.0 * PI;

pub fn radial_problem(pair: &OscillationPair, s_end: f64, nonlinearity: Nonlinearity) -> RadialProblem {
    let map = RadialMap::new(3, 1.0, S0).unwrap();
    let q1: Arc<dyn Coefficient> = Arc::new(pair.lower.q.clone());
    let q2: Arc<dyn Coefficient> = Arc::new(pair.upper.q.clone());
    RadialProblem::new(
        map,
        s_end,
        Arc::new(CoefficientExpr::parse("1/r^4").unwrap()),
        TailModel::power(4.0, 1.0),
        Arc::new(push_a_from_q(q1, map)),
        Arc::new(push_a_from_q(q2, map)),
        nonlinearity,
        1.0,
    )
    .unwrap()
}

/// Default pair, blend problem and barrier on `cells` cells over forty
/// half-periods.
pub fn default_setup(cells: usize) -> (OscillationPair, RadialProblem, BarrierPair) {
    let pair = build_pair(PairParams::default()).unwrap();
    let s_end = S0 + 40.0 * PI;
    let problem = radial_problem(&pair, s_end, Nonlinearity::default());
    let grid = kernel::uniform_grid(S0, s_end, cells);
    let o1 = pair.lower.lemma_options().unwrap();
    let o2 = pair.upper.lemma_options().unwrap();
    let (barrier, _) = build_barrier(&problem, &pair.lower.nodes, [&o1, &o2], &grid, &KernelOptions::default()).unwrap();
    (pair, problem, barrier)
}
