//! Monotone iteration for the radial problem in the comparison variable:
//!
//! ```text
//! H'' + p(H' - H/s) + F(s, H) = 0,   F(s, H) = ββ' f(β(s), H/s)/(n-2),
//! ```
//!
//! on `[s0, S]` with Dirichlet data taken from a barrier. Each step solves
//! `H'' + p(H' - H/s) - K H = -F(s, H^k) - K H^k` by central differences,
//! written as a correction so the increment is computed directly.

use serde::Serialize;
use thiserror::Error;

use crate::bridge::{forcing, lift_coefficients, BarrierPair, BridgeError, RadialProblem};
use crate::dsl::EvalError;
use crate::example::ls_slope;
use crate::tridiag::{self, TridiagonalError};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const SANDWICH_TOL: f64 = 1e-8;
/// Allowed pointwise rise between iterates, on top of a rounding allowance
/// proportional to the previous increment.
pub const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvpError {
    #[error("iterate rose by {rise:e} at s = {s} in step {iteration}; increase the shift K (now {shift})")]
    NonMonotone { iteration: usize, s: f64, rise: f64, shift: f64 },
    #[error("no convergence after {iterations} iterations (last increment {last:e})")]
    NoConvergence { iterations: usize, last: f64 },
    #[error("sandwich violated: min(u - v1) = {lower:e}, min(v2 - u) = {upper:e}")]
    SandwichViolated { lower: f64, upper: f64 },
    #[error("grid spacing {step} too coarse for p = {p} at s = {s} (needs p·Δ/2 < 1)")]
    CoarseGrid { step: f64, p: f64, s: f64 },
    #[error("grid needs at least 3 uniform nodes")]
    Grid,
    #[error("sample length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fit window holds a nonpositive value {value} at r = {r}")]
    NonPositive { r: f64, value: f64 },
    #[error("invalid option: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linear(#[from] TridiagonalError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The shift `K` in the linear step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ShiftChoice {
    /// 1.5 times the sampled decreasing part of `∂F/∂H` on the ribbon; zero
    /// when `F` is nondecreasing in `H`.
    Auto,
    /// 1.5 times the sampled `sup |∂F/∂H|` on the ribbon.
    Lipschitz,
    Fixed(f64),
}

/// Which barrier supplies the Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTrace {
    Supersolution,
    Subsolution,
}

#[derive(Debug, Clone, Copy)]
pub struct BvpOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub shift: ShiftChoice,
    pub trace: BoundaryTrace,
    /// Sample points per node when estimating `∂F/∂H` over the ribbon.
    pub ribbon_samples: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            tol: DEFAULT_TOL,
            max_iterations: 500,
            shift: ShiftChoice::Auto,
            trace: BoundaryTrace::Supersolution,
            ribbon_samples: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    /// `min (u - v1)` over interior nodes.
    pub lower_margin: f64,
    /// `min (v2 - u)` over interior nodes.
    pub upper_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BvpSolution {
    pub grid: Vec<f64>,
    pub radii: Vec<f64>,
    /// `H` on the grid.
    pub h_values: Vec<f64>,
    /// `u = H/s`.
    pub u_values: Vec<f64>,
    pub iterations: usize,
    pub iteration_sup_deltas: Vec<f64>,
    /// Largest pointwise rise of the first step, which absorbs the
    /// discretization defect of the starting barrier.
    pub initial_rise: f64,
    /// Largest pointwise rise `H^{k+1} - H^k` over later steps.
    pub max_rise: f64,
    pub shift: f64,
    pub trace: BoundaryTrace,
    /// Discrete residual of the converged `H`, zero at the boundary nodes.
    pub residual: Vec<f64>,
    pub residual_sup: f64,
    pub sandwich: SandwichReport,
}

impl BvpSolution {
    /// Whether the recorded increments decrease strictly after the first step.
    pub fn deltas_decreasing(&self) -> bool {
        self.iteration_sup_deltas.iter().skip(1).zip(self.iteration_sup_deltas.iter().skip(2)).all(|(a, b)| b < a)
    }
}

fn uniform_step(grid: &[f64]) -> Result<f64, BvpError> {
    if grid.len() < 3 {
        return Err(BvpError::Grid);
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if grid.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step) {
        return Err(BvpError::Grid);
    }
    Ok(step)
}

/// Sampled bounds of `∂F/∂H` over the ribbon: `(min, max)`.
fn ribbon_slopes(problem: &RadialProblem, barrier: &BarrierPair, samples: usize) -> Result<(f64, f64), BvpError> {
    let grid = barrier.grid();
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let samples = samples.max(2);
    for i in 0..grid.len() {
        let s = grid[i];
        let at = barrier.ribbon_point(problem, i)?;
        let scale = problem.map.beta_beta_prime(s) / ((problem.map.n - 2) as f64 * s);
        for j in 0..samples {
            let u = at.v1 + (at.v2 - at.v1) * j as f64 / (samples - 1) as f64;
            let d = scale * problem.nonlinearity.slope(&at, u);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok((lo, hi))
}

/// Solve the truncated radial problem between the barriers on their grid.
pub fn solve_radial(problem: &RadialProblem, barrier: &BarrierPair, opts: &BvpOptions) -> Result<BvpSolution, BvpError> {
    if !(opts.tol > 0.0) {
        return Err(BvpError::Invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = barrier.grid().to_vec();
    let step = uniform_step(&grid)?;
    let n = grid.len();
    let shift = match opts.shift {
        ShiftChoice::Fixed(k) if k >= 0.0 && k.is_finite() => k,
        ShiftChoice::Fixed(k) => return Err(BvpError::Invalid(format!("shift must be nonnegative, got {k}"))),
        ShiftChoice::Auto => 1.5 * (-ribbon_slopes(problem, barrier, opts.ribbon_samples)?.0).max(0.0),
        ShiftChoice::Lipschitz => {
            let (lo, hi) = ribbon_slopes(problem, barrier, opts.ribbon_samples)?;
            1.5 * lo.abs().max(hi.abs())
        }
    };
    let lifted = lift_coefficients(problem)?;
    let mut p = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for (i, &s) in grid.iter().enumerate() {
        let pv = lifted.p.value(s)?;
        if pv * step / 2.0 >= 1.0 {
            return Err(BvpError::CoarseGrid { step, p: pv, s });
        }
        p.push(pv);
        points.push(barrier.ribbon_point(problem, i)?);
    }
    let forcing_at = |i: usize, h: f64| forcing(problem, &points[i], grid[i], h);

    let inv2 = 1.0 / (step * step);
    let m = n - 2;
    let lower: Vec<f64> = (2..n - 1).map(|i| inv2 - p[i] / (2.0 * step)).collect();
    let upper: Vec<f64> = (1..n - 2).map(|i| inv2 + p[i] / (2.0 * step)).collect();
    let diag: Vec<f64> = (1..n - 1).map(|i| -2.0 * inv2 - p[i] / grid[i] - shift).collect();

    // residual of the unshifted nonlinear equation at H, interior nodes
    let residual_of = |h: &[f64]| -> Vec<f64> {
        (1..n - 1)
            .map(|i| {
                let s = grid[i];
                let d2 = ((h[i + 1] - h[i]) - (h[i] - h[i - 1])) * inv2;
                let d1 = (h[i + 1] - h[i - 1]) / (2.0 * step);
                d2 + p[i] * (d1 - h[i] / s) + forcing_at(i, h[i])
            })
            .collect()
    };

    let start = &barrier.upper.h_values;
    let trace = match opts.trace {
        BoundaryTrace::Supersolution => &barrier.upper.h_values,
        BoundaryTrace::Subsolution => &barrier.lower.h_values,
    };
    let mut h = start.clone();
    h[0] = trace[0];
    h[n - 1] = trace[n - 1];

    let mut deltas = Vec::new();
    let mut max_rise = f64::NEG_INFINITY;
    let mut converged = false;
    let mut prev_sup = 0.0;
    let mut initial_rise = f64::NEG_INFINITY;
    for iteration in 1..=opts.max_iterations {
        // A δ = -(D²H + p(D¹H - H/s) + F(H)), boundary increments zero
        let rhs: Vec<f64> = residual_of(&h).into_iter().map(|r| -r).collect();
        let delta = tridiag::solve(&lower, &diag, &upper, &rhs)?;
        debug_assert_eq!(delta.len(), m);
        let sup = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        // rounding of the previous solve scales with its increment; the step
        // that meets the tolerance carries nothing else
        let allowance = MONOTONE_TOL + 64.0 * f64::EPSILON * n as f64 * prev_sup;
        prev_sup = sup;
        if iteration == 1 {
            initial_rise = delta.iter().fold(f64::NEG_INFINITY, |a, &d| a.max(d));
        } else if sup > opts.tol {
            if let Some((j, &rise)) = delta.iter().enumerate().find(|(_, &d)| d > allowance) {
                return Err(BvpError::NonMonotone { iteration, s: grid[j + 1], rise, shift });
            }
        }
        for (j, d) in delta.iter().enumerate() {
            if iteration > 1 {
                max_rise = max_rise.max(*d);
            }
            h[j + 1] += d;
        }
        deltas.push(sup);
        if sup <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(BvpError::NoConvergence { iterations: deltas.len(), last: deltas.last().copied().unwrap_or(f64::NAN) });
    }

    let mut residual = vec![0.0; n];
    residual[1..n - 1].copy_from_slice(&residual_of(&h));
    let residual_sup = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let u_values: Vec<f64> = grid.iter().zip(&h).map(|(s, h)| h / s).collect();
    let sandwich = check_sandwich(&grid, &u_values, barrier)?;
    let radii = grid.iter().map(|&s| problem.map.beta(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(BvpSolution {
        radii,
        h_values: h,
        u_values,
        iterations: deltas.len(),
        iteration_sup_deltas: deltas,
        initial_rise,
        max_rise,
        shift,
        trace: opts.trace,
        residual,
        residual_sup,
        sandwich,
        grid,
    })
}

/// Margins of `v1 <= u <= v2` over interior nodes, `u` given as `H/s`.
pub fn check_sandwich(grid: &[f64], u: &[f64], barrier: &BarrierPair) -> Result<SandwichReport, BvpError> {
    if barrier.grid() != grid {
        return Err(BridgeError::GridMismatch.into());
    }
    if u.len() != grid.len() {
        return Err(BvpError::LengthMismatch { expected: grid.len(), got: u.len() });
    }
    if grid.len() < 3 {
        return Err(BvpError::Grid);
    }
    let (v1, v2) = (barrier.v1(), barrier.v2());
    let inner = 1..grid.len() - 1;
    let lower_margin = inner.clone().map(|i| u[i] - v1[i]).fold(f64::INFINITY, f64::min);
    let upper_margin = inner.map(|i| v2[i] - u[i]).fold(f64::INFINITY, f64::min);
    Ok(SandwichReport {
        lower_margin,
        upper_margin,
        pass: lower_margin >= -SANDWICH_TOL && upper_margin >= -SANDWICH_TOL,
    })
}

/// Least-squares slope of `ln u` against `ln r`.
pub fn fit_log_slope(r: &[f64], u: &[f64]) -> Result<f64, BvpError> {
    if r.len() != u.len() {
        return Err(BvpError::LengthMismatch { expected: r.len(), got: u.len() });
    }
    if r.len() < 2 {
        return Err(BvpError::Invalid("need at least two points to fit".into()));
    }
    let mut x = Vec::with_capacity(r.len());
    let mut y = Vec::with_capacity(r.len());
    for (&ri, &ui) in r.iter().zip(u) {
        if !(ui > 0.0) || !(ri > 0.0) {
            return Err(BvpError::NonPositive { r: ri, value: ui });
        }
        x.push(ri.ln());
        y.push(ui.ln());
    }
    Ok(ls_slope(&x, &y))
}

/// Decay exponent of `u` over the last `window` fraction of the grid,
/// leaving out the final `boundary_layer` fraction.
pub fn decay_fit(radii: &[f64], u: &[f64], window: f64, boundary_layer: f64) -> Result<f64, BvpError> {
    if !(window > 0.0 && boundary_layer >= 0.0 && window + boundary_layer <= 1.0) {
        return Err(BvpError::Invalid(format!("bad fit window {window} with boundary layer {boundary_layer}")));
    }
    let n = radii.len();
    let end = n - ((boundary_layer * n as f64).round() as usize).min(n);
    let start = end.saturating_sub((window * n as f64).round() as usize);
    fit_log_slope(&radii[start..end], &u.get(start..end).ok_or(BvpError::LengthMismatch { expected: n, got: u.len() })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let r: Vec<f64> = (0..200).map(|i| 10.0 + i as f64).collect();
        let u: Vec<f64> = r.iter().map(|r| 3.0 / r).collect();
        assert!((fit_log_slope(&r, &u).unwrap() + 1.0).abs() < 1e-10);
        let u4: Vec<f64> = r.iter().map(|r| r.powi(-2)).collect();
        assert!((decay_fit(&r, &u4, 0.3, 0.05).unwrap() + 2.0).abs() < 1e-10);
    }

    #[test]
    fn perturbed_power_law_slope() {
        let r: Vec<f64> = (0..=500).map(|i| 50.0 + 0.1 * i as f64).collect();
        let u: Vec<f64> = r.iter().map(|r| 2.0 / r * (1.0 + 1.0 / r)).collect();
        let slope = fit_log_slope(&r, &u).unwrap();
        assert!((slope + 1.0).abs() < 0.02, "{slope}");
    }

    #[test]
    fn nonpositive_fit_rejected() {
        assert!(matches!(fit_log_slope(&[1.0, 2.0], &[1.0, 0.0]), Err(BvpError::NonPositive { .. })));
        assert!(decay_fit(&[1.0, 2.0], &[1.0, 1.0], 0.9, 0.2).is_err());
    }
}
