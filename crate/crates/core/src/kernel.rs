//! Kernel of the linear comparison equation
//! `h'' + p(s)(h' - h/s) + q(s)/s = 0`.
//!
//! With `P(s) = ∫_{s0}^s p`, the kernel is
//!
//! ```text
//! z(s) = -exp(-P(s)) ∫_{s0}^s q(t) exp(P(t)) dt,      z' = -p z - q,
//! h(s) = -s ∫_s^∞ z(t)/t² dt,                          h' - h/s = z/s.
//! ```
//!
//! Sampling happens on a user grid; internally every cell is split into an
//! even number of equal sub-cells so `h` can be assembled with composite
//! Simpson sums. The integral for `h` is truncated at the end of the grid.
//! Its tail is estimated from the mean of `z` over a trailing window, and
//! `|z| <= z_sup_bound` certifies `|∫_S^∞ z/t²| <= z_sup_bound / S`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Coefficient, EvalError};
use crate::quadrature::{self, QuadratureError, TailModel};
use crate::rk::{self, RkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ode(#[from] RkError),
    #[error("p is negative ({value:e}) at s = {s}")]
    NegativeP { s: f64, value: f64 },
    #[error("exp(∫p) overflowed at s = {s}")]
    Overflow { s: f64 },
    #[error("no finite bound on |z|; check the lemma hypotheses before building h")]
    TailBoundUnavailable,
    #[error("grid needs at least {needed} strictly increasing nodes, got {got}")]
    GridTooShort { needed: usize, got: usize },
    #[error("grid is not uniform (cell {index} has width {width}, expected {expected})")]
    NonUniformGrid { index: usize, width: f64, expected: f64 },
    #[error("sample length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// Total quadrature tolerance across the grid.
    pub tol: f64,
    /// Upper bound on the internal sub-cell width.
    pub max_substep: f64,
    /// Length of the trailing window whose mean of `z` estimates the tail of
    /// `h`; `None` uses the last tenth of the grid.
    pub tail_window: Option<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { tol: 1e-10, max_substep: 0.05, tail_window: None }
    }
}

/// Uniform grid with `intervals` cells on `[lo, hi]`; the last node is `hi`.
pub fn uniform_grid(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(1);
    let step = (hi - lo) / n as f64;
    let mut g: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    g[n] = hi;
    g
}

/// Default kernel grid: spacing π/200 over forty half-periods past `s0`.
pub fn default_grid(s0: f64) -> Vec<f64> {
    uniform_grid(s0, s0 + 40.0 * std::f64::consts::PI, 8000)
}

/// Samples of `z` on a grid plus the refined samples used for integration.
#[derive(Debug, Clone)]
pub struct ZSamples {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    fine_grid: Vec<f64>,
    fine_values: Vec<f64>,
    /// Fine index of every grid node.
    offsets: Vec<usize>,
}

impl ZSamples {
    /// Sample a closed-form `z` (synthetic kernels, tests).
    pub fn from_fn(grid: &[f64], max_substep: f64, z: impl Fn(f64) -> f64) -> Result<Self, KernelError> {
        let (fine_grid, offsets) = refine(grid, max_substep)?;
        let fine_values: Vec<f64> = fine_grid.iter().map(|&s| z(s)).collect();
        Ok(Self::assemble(grid, fine_grid, fine_values, offsets))
    }

    fn assemble(grid: &[f64], fine_grid: Vec<f64>, fine_values: Vec<f64>, offsets: Vec<usize>) -> Self {
        let values = offsets.iter().map(|&o| fine_values[o]).collect();
        ZSamples { grid: grid.to_vec(), values, fine_grid, fine_values, offsets }
    }

    pub fn sup_abs(&self) -> f64 {
        self.fine_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn refine(grid: &[f64], max_substep: f64) -> Result<(Vec<f64>, Vec<usize>), KernelError> {
    if grid.len() < 2 {
        return Err(KernelError::GridTooShort { needed: 2, got: grid.len() });
    }
    quadrature::check_grid(grid)?;
    let mut fine = Vec::with_capacity(grid.len() * 2);
    let mut offsets = Vec::with_capacity(grid.len());
    for w in grid.windows(2) {
        offsets.push(fine.len());
        let len = w[1] - w[0];
        let halves = ((len / (2.0 * max_substep)).ceil() as usize).max(1);
        let sub = 2 * halves;
        for j in 0..sub {
            fine.push(w[0] + len * j as f64 / sub as f64);
        }
    }
    offsets.push(fine.len());
    fine.push(grid[grid.len() - 1]);
    Ok((fine, offsets))
}

fn gauss7_try(lo: f64, hi: f64, f: &impl Fn(f64) -> Result<f64, EvalError>) -> Result<f64, EvalError> {
    let mut err = None;
    let v = quadrature::gauss7(lo, hi, |x| match f(x) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `z` on `grid` from the weighted-integral formula. `grid[0]` is `s0`.
pub fn compute_z<P, Q>(p: &P, q: &Q, grid: &[f64], opts: &KernelOptions) -> Result<ZSamples, KernelError>
where
    P: Coefficient + ?Sized,
    Q: Coefficient + ?Sized,
{
    let (fine, offsets) = refine(grid, opts.max_substep)?;
    let lo = fine[0];
    let hi = fine[fine.len() - 1];
    for &s in &fine {
        let v = p.value(s)?;
        if v < 0.0 {
            return Err(KernelError::NegativeP { s, value: v });
        }
    }
    let p_fn = |s: f64| p.value(s);
    let big_p = quadrature::cumulative_integral(p_fn, &fine, &p.breakpoints(lo, hi), opts.tol)?;
    let q_breaks = q.breakpoints(lo, hi);
    let span = hi - lo;

    // weighted increments ∫ q e^P over each fine cell, P continued inside the
    // cell by a 7-point Gauss rule from the cell's left node
    let increments: Vec<f64> = (0..fine.len() - 1)
        .into_par_iter()
        .map(|i| -> Result<f64, KernelError> {
            let (a, b) = (fine[i], fine[i + 1]);
            let base = big_p[i];
            let weighted = |t: f64| -> Result<f64, EvalError> {
                let inner = if t > a { gauss7_try(a, t, &p_fn)? } else { 0.0 };
                let w = (base + inner).exp();
                if !w.is_finite() {
                    return Err(EvalError::NonFinite { s: t });
                }
                Ok(q.value(t)? * w)
            };
            let lo_idx = q_breaks.partition_point(|&x| x <= a);
            let hi_idx = q_breaks.partition_point(|&x| x < b);
            let local = &q_breaks[lo_idx..hi_idx.max(lo_idx)];
            let r = quadrature::integrate_seeded(weighted, a, b, local, opts.tol * (b - a) / span)?;
            Ok(r.value)
        })
        .collect::<Result<_, _>>()?;

    let mut values = Vec::with_capacity(fine.len());
    let mut acc = 0.0;
    values.push(0.0);
    for (i, inc) in increments.iter().enumerate() {
        acc += inc;
        let damp = (-big_p[i + 1]).exp();
        if !damp.is_finite() {
            return Err(KernelError::Overflow { s: fine[i + 1] });
        }
        values.push(-damp * acc);
    }
    Ok(ZSamples::assemble(grid, fine, values, offsets))
}

/// Independent route to `z`: adaptive Runge-Kutta on `z' = -p z - q`,
/// `z(s0) = 0`, reported on the same refined grid as [`compute_z`].
pub fn z_ode_oracle<P, Q>(p: &P, q: &Q, grid: &[f64], tol: f64, max_substep: f64) -> Result<ZSamples, KernelError>
where
    P: Coefficient + ?Sized,
    Q: Coefficient + ?Sized,
{
    let (fine, offsets) = refine(grid, max_substep)?;
    let rhs = |s: f64, z: f64| -> Result<f64, String> {
        let pv = p.value(s).map_err(|e| e.to_string())?;
        let qv = q.value(s).map_err(|e| e.to_string())?;
        Ok(-pv * z - qv)
    };
    let values = rk::integrate(rhs, &fine, 0.0, tol)?;
    Ok(ZSamples::assemble(grid, fine, values, offsets))
}

/// Sampled kernel pair on one grid.
#[derive(Debug, Clone, Serialize)]
pub struct KernelPair {
    pub grid: Vec<f64>,
    pub z_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// `λ = ∫_{s0}^∞ p`, as supplied by the caller.
    pub lambda: f64,
    /// Bound `(ε + δ) e^λ` on `|z|`.
    pub z_sup_bound: f64,
    /// Estimated `∫_S^∞ z/t²` folded into `h`.
    pub tail_estimate: f64,
    /// Certified bound on `|∫_S^∞ z/t²|`, i.e. on the error of `h/s`.
    pub tail_bound: f64,
    #[serde(skip)]
    pub tail: TailModel,
}

impl KernelPair {
    pub fn h_over_s(&self) -> Vec<f64> {
        self.grid.iter().zip(&self.h_values).map(|(s, h)| h / s).collect()
    }
}

/// `h(s) = -s ∫_s^∞ z/t²`, finite part by composite Simpson on the refined
/// samples plus the tail estimate.
pub fn compute_h(z: &ZSamples, z_sup_bound: Option<f64>, tail_window: Option<f64>) -> Result<(Vec<f64>, f64, TailModel), KernelError> {
    let bound = match z_sup_bound {
        Some(b) if b.is_finite() && b >= 0.0 => b,
        _ => return Err(KernelError::TailBoundUnavailable),
    };
    let fg = &z.fine_grid;
    let fz = &z.fine_values;
    let g: Vec<f64> = fg.iter().zip(fz).map(|(s, v)| v / (s * s)).collect();
    let n = z.grid.len();
    let mut cells = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (a, b) = (z.offsets[k], z.offsets[k + 1]);
        let mut sum = 0.0;
        let mut j = a;
        while j < b {
            let h = fg[j + 2] - fg[j];
            sum += h / 6.0 * (g[j] + 4.0 * g[j + 1] + g[j + 2]);
            j += 2;
        }
        cells.push(sum);
    }
    let s_end = z.grid[n - 1];
    let window = tail_window.unwrap_or(0.1 * (s_end - z.grid[0])).max(0.0);
    let tail_estimate = trailing_mean(fg, fz, s_end - window) / s_end;
    let mut h = vec![0.0; n];
    let mut suffix = tail_estimate;
    h[n - 1] = -s_end * suffix;
    for k in (0..n - 1).rev() {
        suffix += cells[k];
        h[k] = -z.grid[k] * suffix;
    }
    let model = TailModel::power(2.0, bound).with_cutoff(s_end);
    Ok((h, tail_estimate, model))
}

fn trailing_mean(x: &[f64], y: &[f64], from: f64) -> f64 {
    let start = x.partition_point(|&s| s < from).min(x.len() - 1);
    if start + 1 >= x.len() {
        return y[x.len() - 1];
    }
    let mut area = 0.0;
    for i in start..x.len() - 1 {
        area += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    }
    area / (x[x.len() - 1] - x[start])
}

/// Assemble a [`KernelPair`] from sampled `z`.
pub fn assemble(z: &ZSamples, lambda: f64, z_sup_bound: Option<f64>, tail_window: Option<f64>) -> Result<KernelPair, KernelError> {
    let (h_values, tail_estimate, tail) = compute_h(z, z_sup_bound, tail_window)?;
    let s_end = z.grid[z.grid.len() - 1];
    let bound = z_sup_bound.unwrap_or(f64::INFINITY);
    Ok(KernelPair {
        grid: z.grid.clone(),
        z_values: z.values.clone(),
        h_values,
        lambda,
        z_sup_bound: bound,
        tail_estimate,
        tail_bound: tail.tail_integral(s_end),
        tail,
    })
}

/// Compute `z` by quadrature and assemble the pair.
pub fn build<P, Q>(
    p: &P,
    q: &Q,
    grid: &[f64],
    lambda: f64,
    z_sup_bound: Option<f64>,
    opts: &KernelOptions,
) -> Result<KernelPair, KernelError>
where
    P: Coefficient + ?Sized,
    Q: Coefficient + ?Sized,
{
    if z_sup_bound.map_or(true, |b| !b.is_finite()) {
        return Err(KernelError::TailBoundUnavailable);
    }
    let z = compute_z(p, q, grid, opts)?;
    assemble(&z, lambda, z_sup_bound, opts.tail_window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualNorms {
    /// Sup over interior nodes of `|h'' + p(h' - h/s) + q/s|`.
    pub sup: f64,
    /// Discrete L² norm of the same residual.
    pub l2: f64,
    /// Sup of `|h' - h/s - z/s|` when `z` is supplied.
    pub identity_sup: Option<f64>,
}

fn uniform_step(grid: &[f64]) -> Result<f64, KernelError> {
    if grid.len() < 3 {
        return Err(KernelError::GridTooShort { needed: 3, got: grid.len() });
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    for (index, w) in grid.windows(2).enumerate() {
        let width = w[1] - w[0];
        if (width - step).abs() > 1e-9 * step {
            return Err(KernelError::NonUniformGrid { index, width, expected: step });
        }
    }
    Ok(step)
}

/// Central-difference residual of `h` in the comparison equation.
pub fn ode_residual<P, Q>(h: &[f64], p: &P, q: &Q, grid: &[f64], z: Option<&[f64]>) -> Result<ResidualNorms, KernelError>
where
    P: Coefficient + ?Sized,
    Q: Coefficient + ?Sized,
{
    let step = uniform_step(grid)?;
    if h.len() != grid.len() {
        return Err(KernelError::LengthMismatch { expected: grid.len(), got: h.len() });
    }
    if let Some(z) = z {
        if z.len() != grid.len() {
            return Err(KernelError::LengthMismatch { expected: grid.len(), got: z.len() });
        }
    }
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let mut ident: f64 = 0.0;
    for i in 1..grid.len() - 1 {
        let s = grid[i];
        let d2 = ((h[i + 1] - h[i]) - (h[i] - h[i - 1])) / (step * step);
        let d1 = (h[i + 1] - h[i - 1]) / (2.0 * step);
        let r = d2 + p.value(s)? * (d1 - h[i] / s) + q.value(s)? / s;
        sup = sup.max(r.abs());
        sq += r * r * step;
        if let Some(z) = z {
            ident = ident.max((d1 - h[i] / s - z[i] / s).abs());
        }
    }
    Ok(ResidualNorms { sup, l2: sq.sqrt(), identity_sup: z.map(|_| ident) })
}
