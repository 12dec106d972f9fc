use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative squared residual below which a fit is treated as exact.
const EXACT_FIT: f64 = 1e-24;

/// Least-squares fit of `y_t = Σ_{i∈γ} β_i x_{it} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Indices of the regressor rows used.
    pub gamma: Vec<usize>,
    pub beta: Vec<f64>,
    /// Minimized squared error per sample.
    pub tau_hat: f64,
    /// `(1/N) β̂ᵀ X_γ X_γᵀ β̂`, the energy of the fitted signal per sample.
    pub r_hat: f64,
    pub len: usize,
}

impl RegressionFit {
    pub fn k(&self) -> usize {
        self.gamma.len()
    }
}

/// Fits `y` on the rows `gamma` of the `k × N` regressor matrix `x` by
/// Householder QR.
pub fn fit_regression(x: &DMatrix<f64>, y: &[f64], gamma: &[usize]) -> Result<RegressionFit> {
    let n = y.len();
    if x.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "regressor matrix has {} columns but the series has {n} samples",
            x.ncols()
        )));
    }
    if gamma.is_empty() || gamma.len() > n {
        return Err(Error::InvalidInput(format!("cannot fit {} regressors to {n} samples", gamma.len())));
    }
    if let Some(&bad) = gamma.iter().find(|&&i| i >= x.nrows()) {
        return Err(Error::InvalidInput(format!("regressor index {bad} out of range")));
    }
    let k = gamma.len();
    let design = DMatrix::from_fn(n, k, |t, j| x[(gamma[j], t)]);
    let qr = design.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * max_diag) {
        return Err(Error::SingularDesign);
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)?;
    let fitted = &design * &beta;
    let mut rss: f64 = yv.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    // Residuals at rounding level mean the data lie in the regressor span.
    if rss <= EXACT_FIT * yv.norm_squared() {
        rss = 0.0;
    }
    let energy: f64 = fitted.iter().map(|v| v * v).sum();
    Ok(RegressionFit {
        gamma: gamma.to_vec(),
        beta: beta.iter().copied().collect(),
        tau_hat: rss / n as f64,
        r_hat: energy / n as f64,
        len: n,
    })
}

/// Rows `x^0, x^1, ..., x^degree` evaluated at the sample points.
pub fn polynomial_design(x: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(degree + 1, x.len(), |i, t| x[t].powi(i as i32))
}
