//! Dormand-Prince 5(4) integrator for scalar initial value problems.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RkError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side failed at t = {t}: {message}")]
    Rhs { t: f64, message: String },
    #[error("output times must be strictly increasing")]
    BadOutputs,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `(outputs[0], y0)` and return `y` at every
/// output time. Steps are clipped so each output time is hit exactly.
pub fn integrate<F>(f: F, outputs: &[f64], y0: f64, tol: f64) -> Result<Vec<f64>, RkError>
where
    F: Fn(f64, f64) -> Result<f64, String>,
{
    if outputs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RkError::BadOutputs);
    }
    let Some(&t0) = outputs.first() else {
        return Ok(Vec::new());
    };
    let rhs = |t: f64, y: f64| f(t, y).map_err(|message| RkError::Rhs { t, message });
    let mut out = Vec::with_capacity(outputs.len());
    out.push(y0);
    let mut t = t0;
    let mut y = y0;
    let span = outputs[outputs.len() - 1] - t0;
    let mut h = (span * 1e-3).max(1e-6).min(0.1);
    let mut k = [0.0; 7];
    k[0] = rhs(t, y)?;
    for &target in &outputs[1..] {
        while t < target {
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            if step < 1e-14 * t.abs().max(1.0) && !last {
                return Err(RkError::StepUnderflow { t });
            }
            for i in 1..7 {
                let mut yi = y;
                for j in 0..i {
                    yi += step * A[i][j] * k[j];
                }
                k[i] = rhs(t + C[i] * step, yi)?;
            }
            let mut y5 = y;
            let mut y4 = y;
            for i in 0..7 {
                y5 += step * B5[i] * k[i];
                y4 += step * B4[i] * k[i];
            }
            let scale = tol * (1.0 + y.abs().max(y5.abs()));
            let err = (y5 - y4).abs() / scale;
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y5;
                // first-same-as-last
                k[0] = k[6];
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                // keep the natural step for the next interval
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(RkError::StepUnderflow { t });
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let ts: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let ys = integrate(|_, y| Ok(-y), &ts, 1.0, 1e-10).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn forced_oscillator_component() {
        // y' = cos t, y(0) = 0 -> sin t
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 * 0.3).collect();
        let ys = integrate(|t, _| Ok(t.cos()), &ts, 0.0, 1e-11).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y - t.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn rhs_error_propagates() {
        let err = integrate(|t, _| if t > 1.0 { Err("boom".into()) } else { Ok(0.0) }, &[0.0, 2.0], 0.0, 1e-8);
        assert!(matches!(err, Err(RkError::Rhs { .. })));
    }
}
