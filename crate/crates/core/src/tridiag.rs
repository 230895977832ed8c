//! Thomas algorithm for tridiagonal systems.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TridiagonalError {
    #[error("system dimensions do not match: {0}")]
    Shape(String),
    #[error("zero pivot at row {0}")]
    ZeroPivot(usize),
}

/// Solve `A x = rhs` with `A` given by its three bands.
///
/// `lower[i]` is `A[i+1][i]`, `upper[i]` is `A[i][i+1]`; both have length
/// `n - 1`. No pivoting, so `A` should be diagonally dominant.
pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, TridiagonalError> {
    let n = diag.len();
    if n == 0 || rhs.len() != n || lower.len() + 1 != n || upper.len() + 1 != n {
        return Err(TridiagonalError::Shape(format!(
            "diag {n}, lower {}, upper {}, rhs {}",
            lower.len(),
            upper.len(),
            rhs.len()
        )));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err(TridiagonalError::ZeroPivot(0));
    }
    if n > 1 {
        c[0] = upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(TridiagonalError::ZeroPivot(i));
        }
        if i < n - 1 {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
