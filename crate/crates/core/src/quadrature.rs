//! Adaptive quadrature on finite intervals, truncated semi-infinite
//! integrals with certified tail bounds, and prefix integrals on grids.
//!
//! The finite-interval routine is a globally adaptive 7/15-point
//! Gauss-Kronrod scheme: the local error is the difference between the
//! two nested rules and the cell with the largest error is bisected until
//! the summed estimate meets the tolerance. Callers can seed the initial
//! partition (lobe nodes of a piecewise integrand, for instance) so that no
//! cell straddles a change of definition.

use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::EvalError;

pub const DEFAULT_FINITE_TOL: f64 = 1e-10;
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;
const DEFAULT_MAX_CELLS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
    #[error("subdivision limit reached: error estimate {achieved:e} above tolerance {requested:e}")]
    SubdivisionLimit { achieved: f64, requested: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("tail model violated at s = {at}: |f| = {observed:e} exceeds bound {bound:e}")]
    TailModelViolated { at: f64, observed: f64, bound: f64 },
    #[error("tail model is not usable: {0}")]
    BadTailModel(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub tail_bound: f64,
    pub evaluations: usize,
}

impl IntegralResult {
    pub fn zero() -> Self {
        IntegralResult { value: 0.0, abs_error_estimate: 0.0, tail_bound: 0.0, evaluations: 0 }
    }

    /// Error estimate plus tail bound.
    pub fn total_uncertainty(&self) -> f64 {
        self.abs_error_estimate + self.tail_bound
    }
}

// Kronrod abscissae and weights for the 15-point rule (QUADPACK qk15); the
// odd-indexed abscissae carry the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Gauss-Legendre 7-point nodes and weights on [-1, 1] (the Gauss part of
/// the Kronrod pair), exposed for callers that need a cheap fixed rule.
pub fn gauss7(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut acc = WG[3] * f(c);
    for j in 0..3 {
        let x = XGK[2 * j + 1] * h;
        acc += WG[j] * (f(c - x) + f(c + x));
    }
    acc * h
}

struct Cell {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    abs_integral: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error).then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn kronrod_cell<F>(f: &F, lo: f64, hi: f64) -> Result<Cell, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let sample = |x: f64| -> Result<f64, QuadratureError> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };
    let fc = sample(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs_k = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = XGK[j] * h;
        let f1 = sample(c - x)?;
        let f2 = sample(c + x)?;
        kronrod += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Cell {
        lo,
        hi,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
        abs_integral: abs_k * h.abs(),
    })
}

fn check_interval(lo: f64, hi: f64, tol: f64) -> Result<(), QuadratureError> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(QuadratureError::InvalidInterval { lo, hi });
    }
    if !(tol > 0.0) {
        return Err(QuadratureError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Adaptive integral of `f` over `[lo, hi]` to absolute tolerance `tol`.
pub fn integrate_finite<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    integrate_seeded(f, lo, hi, &[], tol)
}

/// As [`integrate_finite`], with the initial partition refined at `seeds`
/// (points outside `(lo, hi)` are ignored).
pub fn integrate_seeded<F>(
    f: F,
    lo: f64,
    hi: f64,
    seeds: &[f64],
    tol: f64,
) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    check_interval(lo, hi, tol)?;
    if lo == hi {
        return Ok(IntegralResult::zero());
    }
    let mut points: Vec<f64> = Vec::with_capacity(seeds.len() + 2);
    points.push(lo);
    let mut inner: Vec<f64> = seeds.iter().copied().filter(|&x| x > lo && x < hi).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    points.extend(inner);
    points.push(hi);

    let mut heap = BinaryHeap::with_capacity(points.len() * 2);
    let mut evaluations = 0;
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in points.windows(2) {
        let cell = kronrod_cell(&f, w[0], w[1])?;
        evaluations += 15;
        total_err += cell.error;
        total_abs += cell.abs_integral;
        heap.push(cell);
    }
    let max_cells = DEFAULT_MAX_CELLS.max(4 * points.len());
    loop {
        // below this the estimate is dominated by rounding in the rules
        let floor = 50.0 * f64::EPSILON * total_abs;
        if total_err <= tol.max(floor) {
            break;
        }
        if heap.len() >= max_cells {
            return Err(QuadratureError::SubdivisionLimit { achieved: total_err, requested: tol });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // cell can no longer be split in floating point
            return Err(QuadratureError::SubdivisionLimit { achieved: total_err, requested: tol });
        }
        let left = kronrod_cell(&f, worst.lo, mid)?;
        let right = kronrod_cell(&f, mid, worst.hi)?;
        evaluations += 30;
        total_err += left.error + right.error - worst.error;
        total_abs += left.abs_integral + right.abs_integral - worst.abs_integral;
        heap.push(left);
        heap.push(right);
    }
    // re-sum in position order so the result does not depend on heap layout
    let mut cells = heap.into_vec();
    cells.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let value = cells.iter().map(|c| c.value).sum();
    let abs_error_estimate = cells.iter().map(|c| c.error).sum::<f64>().max(0.0);
    Ok(IntegralResult { value, abs_error_estimate, tail_bound: 0.0, evaluations })
}

/// Decay model certifying `|f(s)| <= bound(s)` for `s >= cutoff`.
#[derive(Clone)]
pub enum TailKind {
    /// `|f(s)| <= constant * s^(-exponent)`, exponent > 1.
    Power { exponent: f64, constant: f64 },
    /// `|f(s)| <= constant * exp(-rate * s)`, rate > 0.
    Exponential { rate: f64, constant: f64 },
    /// Caller-supplied pointwise bound and closed-form tail integral of it.
    Custom {
        pointwise: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        tail: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for TailKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TailKind::Power { exponent, constant } => {
                write!(f, "Power {{ exponent: {exponent}, constant: {constant} }}")
            }
            TailKind::Exponential { rate, constant } => {
                write!(f, "Exponential {{ rate: {rate}, constant: {constant} }}")
            }
            TailKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TailModel {
    pub kind: TailKind,
    /// Truncation point; `None` picks the smallest cutoff whose certified
    /// tail is at most half the tolerance.
    pub cutoff: Option<f64>,
}

impl TailModel {
    pub fn power(exponent: f64, constant: f64) -> Self {
        TailModel { kind: TailKind::Power { exponent, constant }, cutoff: None }
    }

    pub fn exponential(rate: f64, constant: f64) -> Self {
        TailModel { kind: TailKind::Exponential { rate, constant }, cutoff: None }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    fn validate(&self) -> Result<(), QuadratureError> {
        match self.kind {
            TailKind::Power { exponent, constant } if !(exponent > 1.0) || !(constant >= 0.0) => Err(
                QuadratureError::BadTailModel(format!("power model needs exponent > 1 and constant >= 0, got {exponent}, {constant}")),
            ),
            TailKind::Exponential { rate, constant } if !(rate > 0.0) || !(constant >= 0.0) => Err(
                QuadratureError::BadTailModel(format!("exponential model needs rate > 0 and constant >= 0, got {rate}, {constant}")),
            ),
            _ => Ok(()),
        }
    }

    /// Pointwise bound on `|f(s)|`.
    pub fn pointwise(&self, s: f64) -> f64 {
        match &self.kind {
            TailKind::Power { exponent, constant } => constant * s.powf(-exponent),
            TailKind::Exponential { rate, constant } => constant * (-rate * s).exp(),
            TailKind::Custom { pointwise, .. } => pointwise(s),
        }
    }

    /// Certified bound on `∫_c^∞ |f|`.
    pub fn tail_integral(&self, c: f64) -> f64 {
        match &self.kind {
            TailKind::Power { exponent, constant } => constant * c.powf(1.0 - exponent) / (exponent - 1.0),
            TailKind::Exponential { rate, constant } => constant * (-rate * c).exp() / rate,
            TailKind::Custom { tail, .. } => tail(c),
        }
    }

    fn auto_cutoff(&self, lo: f64, tol: f64) -> Result<f64, QuadratureError> {
        let target = 0.5 * tol;
        let c = match &self.kind {
            TailKind::Power { exponent, constant } => {
                if *constant == 0.0 {
                    lo
                } else {
                    (constant / ((exponent - 1.0) * target)).powf(1.0 / (exponent - 1.0))
                }
            }
            TailKind::Exponential { rate, constant } => {
                if *constant == 0.0 {
                    lo
                } else {
                    (constant / (rate * target)).ln() / rate
                }
            }
            TailKind::Custom { tail, .. } => {
                let mut c = lo.abs().max(1.0);
                let mut steps = 0;
                while tail(c) > target {
                    c *= 2.0;
                    steps += 1;
                    if steps > 200 {
                        return Err(QuadratureError::BadTailModel("custom tail never drops below tolerance".into()));
                    }
                }
                c
            }
        };
        Ok(c.max(lo))
    }

    /// Power model for `(s - origin) f(s)` given this model for `f`.
    pub fn first_moment(&self, origin: f64) -> Result<TailModel, QuadratureError> {
        match self.kind.clone() {
            TailKind::Power { exponent, constant } => {
                if exponent <= 2.0 {
                    return Err(QuadratureError::BadTailModel(format!(
                        "first moment of a power tail needs exponent > 2, got {exponent}"
                    )));
                }
                if origin < 0.0 {
                    return Err(QuadratureError::BadTailModel("moment origin must be nonnegative".into()));
                }
                // (s - origin) C s^-e <= C s^(1-e) for origin >= 0
                Ok(TailModel { kind: TailKind::Power { exponent: exponent - 1.0, constant }, cutoff: None })
            }
            TailKind::Exponential { rate, constant } => Ok(TailModel {
                kind: TailKind::Custom {
                    pointwise: Arc::new(move |s| (s - origin).max(0.0) * constant * (-rate * s).exp()),
                    tail: Arc::new(move |c| {
                        constant * (-rate * c).exp() * ((c - origin).max(0.0) / rate + 1.0 / (rate * rate))
                    }),
                },
                cutoff: None,
            }),
            TailKind::Custom { .. } => {
                Err(QuadratureError::BadTailModel("first moment of a custom tail is not derivable".into()))
            }
        }
    }
}

/// `∫_lo^∞ f`, truncated at the model's cutoff. The returned value is the
/// finite part only; `tail_bound` covers what was discarded.
pub fn integrate_tail<F>(
    f: F,
    lo: f64,
    model: &TailModel,
    seeds: &[f64],
    tol: f64,
) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    model.validate()?;
    if !(tol > 0.0) {
        return Err(QuadratureError::InvalidTolerance(tol));
    }
    let cutoff = match model.cutoff {
        Some(c) => c.max(lo),
        None => model.auto_cutoff(lo, tol)?,
    };
    // sampled decay must respect the model past the cutoff
    let mut x = cutoff;
    for k in 0..24 {
        let observed = f(x)?.abs();
        let bound = model.pointwise(x);
        if observed > bound * (1.0 + 1e-9) + f64::MIN_POSITIVE {
            return Err(QuadratureError::TailModelViolated { at: x, observed, bound });
        }
        x = cutoff * (1.0 + 0.25 * (k + 1) as f64).powi(2);
    }
    // geometric seeds keep the bisection from starving the near field
    let mut all_seeds: Vec<f64> = seeds.to_vec();
    if lo > 0.0 {
        let mut g = lo * 2.0;
        while g < cutoff {
            all_seeds.push(g);
            g *= 2.0;
        }
    }
    let mut res = integrate_seeded(&f, lo, cutoff, &all_seeds, 0.5 * tol)?;
    res.tail_bound = model.tail_integral(cutoff);
    Ok(res)
}

/// Prefix integrals `P_i = ∫_{grid[0]}^{grid[i]} f`, one adaptive solve per
/// cell with the tolerance split in proportion to cell length.
pub fn cumulative_integral<F>(f: F, grid: &[f64], breaks: &[f64], tol: f64) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError> + Sync,
{
    use rayon::prelude::*;

    check_grid(grid)?;
    if !(tol > 0.0) {
        return Err(QuadratureError::InvalidTolerance(tol));
    }
    let span = grid[grid.len() - 1] - grid[0];
    let cells: Vec<f64> = grid
        .par_windows(2)
        .map(|w| {
            let lo_idx = breaks.partition_point(|&b| b <= w[0]);
            let hi_idx = breaks.partition_point(|&b| b < w[1]);
            let local = &breaks[lo_idx..hi_idx.max(lo_idx)];
            let cell_tol = if span > 0.0 { tol * (w[1] - w[0]) / span } else { tol };
            integrate_seeded(&f, w[0], w[1], local, cell_tol).map(|r| r.value)
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for c in cells {
        acc += c;
        out.push(acc);
    }
    Ok(out)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<(), QuadratureError> {
    if grid.is_empty() {
        return Err(QuadratureError::InvalidInterval { lo: f64::NAN, hi: f64::NAN });
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(QuadratureError::InvalidInterval { lo: w[0], hi: w[1] });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn ok(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Result<f64, EvalError> {
        move |s| Ok(f(s))
    }

    #[test]
    fn sin_squared_lobe() {
        let r = integrate_finite(ok(|s: f64| s.sin().powi(2)), 2.0 * PI, 3.0 * PI, 1e-12).unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-13);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn zero_integrand_and_empty_interval() {
        let r = integrate_finite(ok(|_| 0.0), 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
        let r = integrate_finite(ok(|s| s), 3.0, 3.0, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn inverse_cube_finite_piece() {
        let r = integrate_finite(ok(|s: f64| s.powi(-3)), 10.0, 100.0, 1e-12).unwrap();
        assert!((r.value - 0.00495).abs() < 1e-14);
        assert!(r.abs_error_estimate <= 1e-12);
    }

    #[test]
    fn tail_closed_forms() {
        let model = TailModel::power(3.0, 1.0);
        let r = integrate_tail(ok(|s: f64| s.powi(-3)), 10.0, &model, &[], 1e-8).unwrap();
        assert!((r.value - 0.005).abs() <= 1e-8 + r.tail_bound);
        assert!(r.tail_bound <= 0.5e-8 * (1.0 + 1e-12));

        let r = integrate_tail(ok(|s: f64| s.powi(-3)), 2.0 * PI, &model, &[], 1e-12).unwrap();
        let exact = 1.0 / (2.0 * (2.0 * PI).powi(2));
        assert!((r.value - exact).abs() <= 1e-12);

        let r = integrate_tail(ok(|_| 0.0), 2.0 * PI, &TailModel::power(2.0, 0.0), &[], 1e-8).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn exponential_tail() {
        let model = TailModel::exponential(1.0, 1.0);
        let r = integrate_tail(ok(|s: f64| (-s).exp()), 0.0, &model, &[], 1e-10).unwrap();
        assert!((r.value + r.tail_bound - 1.0).abs() < 1e-10);
        assert!((r.value - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn tail_model_violation_detected() {
        // s^-2 does not obey an s^-3 envelope
        let model = TailModel::power(3.0, 1.0);
        let err = integrate_tail(ok(|s: f64| s.powi(-2)), 1.0, &model, &[], 1e-6).unwrap_err();
        assert!(matches!(err, QuadratureError::TailModelViolated { .. }));
        let bad = TailModel::power(1.0, 1.0);
        assert!(matches!(
            integrate_tail(ok(|s: f64| s.powi(-2)), 1.0, &bad, &[], 1e-6),
            Err(QuadratureError::BadTailModel(_))
        ));
    }

    #[test]
    fn cumulative_closed_forms() {
        let g = [0.0, 1.0, 2.0];
        assert_eq!(cumulative_integral(ok(|_| 0.0), &g, &[], 1e-10).unwrap(), vec![0.0; 3]);
        let p = cumulative_integral(ok(|_| 1.0), &g, &[], 1e-10).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-15 && (p[2] - 2.0).abs() < 1e-15);

        let grid: Vec<f64> = (0..=200).map(|i| 2.0 * PI + i as f64 * PI / 100.0).collect();
        let p = cumulative_integral(ok(|s: f64| s.powi(-3)), &grid, &[], 1e-12).unwrap();
        let exact = 1.0 / (2.0 * (2.0 * PI).powi(2)) - 1.0 / (2.0 * (4.0 * PI).powi(2));
        assert!((p[200] - exact).abs() < 1e-13, "{} vs {exact}", p[200]);
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn non_finite_sample_is_an_error() {
        let err = integrate_finite(ok(|s: f64| 1.0 / s), -1.0, 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { .. }));
    }

    #[test]
    fn seeds_hit_kinks() {
        let f = ok(|s: f64| (s - 0.3).abs());
        let r = integrate_seeded(&f, 0.0, 1.0, &[0.3], 1e-14).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn first_moment_of_inverse_cube() {
        let model = TailModel::power(3.0, 1.0).first_moment(2.0 * PI).unwrap();
        let s0 = 2.0 * PI;
        let r = integrate_tail(ok(move |s: f64| (s - s0) * s.powi(-3)), s0, &model, &[], 1e-9).unwrap();
        assert!((r.value - 1.0 / (4.0 * PI)).abs() <= 1e-9, "{}", r.value);
    }
}
