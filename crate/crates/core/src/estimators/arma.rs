use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::ar::fit_ar_ladder;
use crate::estimators::regression::fit_regression;
use crate::model::{expand_product, mean_square, polynomial_roots, residuals, residuals_with_sensitivities, CoeffModel, TimeSeries};

/// Why the Gauss-Newton iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    /// No step length up to the halving limit reduced the cost.
    NoDescent,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub gradient_tolerance: f64,
    /// Roots are pulled back to this radius when projected.
    pub max_radius: f64,
    /// A final root beyond this radius marks the fit as stuck at the boundary.
    pub boundary_radius: f64,
}

impl Default for ArmaOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_halvings: 30,
            gradient_tolerance: 1e-10,
            max_radius: 0.9999,
            boundary_radius: 0.999,
        }
    }
}

/// Prediction-error fit of an ARMA(n, m) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaFit {
    /// Fitted coefficients with `sigma2 = sigma2_hat`.
    pub model: CoeffModel,
    /// `(1/N) Σ e_t²` of the returned model.
    pub sigma2_hat: f64,
    /// Same quantity at the two-stage starting point.
    pub init_sigma2: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Number of times a root had to be moved back into the unit disc.
    pub projections: usize,
    pub stop: StopReason,
    pub at_boundary: bool,
}

impl ArmaFit {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations
    }
}

/// Cost `(1/N) Σ e_t²` and its gradient with respect to `(a, b)`.
pub fn arma_cost_gradient(y: &[f64], a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let (e, sens) = residuals_with_sensitivities(y, a, b);
    let n = y.len() as f64;
    let grad = (0..sens.ncols())
        .map(|c| 2.0 / n * sens.column(c).iter().zip(&e).map(|(s, e)| s * e).sum::<f64>())
        .collect();
    (mean_square(&e), grad)
}

fn cost(y: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let v = mean_square(&residuals(y, a, b));
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Reflects roots outside the unit disc to `1/z̄` and caps the radius.
/// Returns the new coefficients, or `None` when nothing had to change.
fn project(coeffs: &[f64], max_radius: f64) -> Option<Vec<f64>> {
    let roots = polynomial_roots(coeffs);
    if roots.iter().all(|z| z.norm() < max_radius) {
        return None;
    }
    let moved: Vec<_> = roots
        .into_iter()
        .map(|z| {
            let z = if z.norm() >= 1.0 { 1.0 / z.conj() } else { z };
            if z.norm() > max_radius {
                z * (max_radius / z.norm())
            } else {
                z
            }
        })
        .collect();
    Some(expand_product(&moved))
}

fn max_modulus(coeffs: &[f64]) -> f64 {
    polynomial_roots(coeffs).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Long-AR order used by the two-stage initialization.
fn long_ar_order(len: usize) -> usize {
    ((2.0 * (len as f64).sqrt()).ceil() as usize).min(len / 4).max(1)
}

/// Two-stage start: residuals of a long AR fit stand in for the
/// innovations, then `y` is regressed on its own lags and lagged residuals.
fn initial_guess(series: &TimeSeries, n: usize, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = series.values();
    if m == 0 && n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let ehat = if m > 0 {
        let long = fit_ar_ladder(series, long_ar_order(y.len()))?;
        residuals(y, &long.orders.last().expect("nonempty ladder").a, &[])
    } else {
        Vec::new()
    };
    let lagged = |x: &[f64], t: usize, lag: usize| if t >= lag { x[t - lag] } else { 0.0 };
    let x = DMatrix::from_fn(n + m, y.len(), |i, t| {
        if i < n {
            -lagged(y, t, i + 1)
        } else {
            lagged(&ehat, t, i - n + 1)
        }
    });
    let gamma: Vec<usize> = (0..n + m).collect();
    match fit_regression(&x, y, &gamma) {
        Ok(fit) if fit.beta.iter().all(|v| v.is_finite()) => {
            Ok((fit.beta[..n].to_vec(), fit.beta[n..].to_vec()))
        }
        _ => Ok((vec![0.0; n], vec![0.0; m])),
    }
}

/// [`fit_arma_with`] using the default options.
pub fn fit_arma(series: &TimeSeries, n: usize, m: usize) -> Result<ArmaFit> {
    fit_arma_with(series, n, m, &ArmaOptions::default())
}

/// Minimizes `(1/N) Σ (y_t - ŷ_{t|t-1})²` over stable, minimum-phase
/// `(a, b)` by damped Gauss-Newton from a two-stage initialization.
pub fn fit_arma_with(series: &TimeSeries, n: usize, m: usize, opts: &ArmaOptions) -> Result<ArmaFit> {
    let y = series.values();
    let k = n + m + 1;
    if y.len() < 5 * k {
        return Err(Error::InvalidInput(format!(
            "ARMA({n},{m}) needs at least {} samples, got {}",
            5 * k,
            y.len()
        )));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("series is identically zero".into()));
    }
    let (mut a, mut b) = initial_guess(series, n, m)?;
    let mut projections = 0;
    if let Some(p) = project(&a, opts.max_radius) {
        a = p;
        projections += 1;
    }
    if let Some(p) = project(&b, opts.max_radius) {
        b = p;
        projections += 1;
    }
    let init_sigma2 = cost(y, &a, &b);
    let mut current = init_sigma2;
    let mut iterations = 0;
    let mut grad_norm;
    let stop = loop {
        let (e, sens) = residuals_with_sensitivities(y, &a, &b);
        let ev = DVector::from_column_slice(&e);
        let jt_e = sens.tr_mul(&ev);
        grad_norm = 2.0 / y.len() as f64 * jt_e.norm();
        if !grad_norm.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        if grad_norm <= opts.gradient_tolerance || n + m == 0 {
            break StopReason::GradientTolerance;
        }
        if iterations == opts.max_iterations {
            break StopReason::MaxIterations;
        }
        let mut jtj = sens.tr_mul(&sens);
        let direction = match jtj.clone().cholesky() {
            Some(c) => c.solve(&(-&jt_e)),
            None => {
                let ridge = 1e-8 * jtj.trace().max(f64::MIN_POSITIVE) / (n + m) as f64;
                for i in 0..n + m {
                    jtj[(i, i)] += ridge;
                }
                match jtj.cholesky() {
                    Some(c) => c.solve(&(-&jt_e)),
                    None => break StopReason::NoDescent,
                }
            }
        };
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut ta: Vec<f64> = a.iter().zip(direction.iter()).map(|(x, d)| x + step * d).collect();
            let mut tb: Vec<f64> = b.iter().zip(direction.iter().skip(n)).map(|(x, d)| x + step * d).collect();
            let mut moved = 0;
            if let Some(p) = project(&ta, opts.max_radius) {
                ta = p;
                moved += 1;
            }
            if let Some(p) = project(&tb, opts.max_radius) {
                tb = p;
                moved += 1;
            }
            let c = cost(y, &ta, &tb);
            if c < current {
                accepted = Some((ta, tb, c, moved));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((ta, tb, c, moved)) => {
                a = ta;
                b = tb;
                current = c;
                projections += moved;
            }
            None => break StopReason::NoDescent,
        }
    };
    let at_boundary = max_modulus(&a).max(max_modulus(&b)) > opts.boundary_radius;
    let model = CoeffModel::stable_unchecked(a, b, current.max(f64::MIN_POSITIVE))?;
    Ok(ArmaFit {
        model,
        sigma2_hat: current,
        init_sigma2,
        iterations,
        grad_norm,
        projections,
        stop,
        at_boundary,
    })
}
