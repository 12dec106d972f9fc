use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TimeSeries;

/// Prewindowed least-squares fit of one AR order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArOrderFit {
    /// `a_1..a_n` of `A(q) = 1 + a_1 q^{-1} + ... + a_n q^{-n}`.
    pub a: Vec<f64>,
    /// `(1/N) Σ (y_t + Σ a_i y_{t-i})²` with zero pre-sample values.
    pub sigma2_hat: f64,
}

/// AR fits of orders `1..=n_max` on the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFitLadder {
    pub len: usize,
    pub orders: Vec<ArOrderFit>,
}

impl ArFitLadder {
    pub fn n_max(&self) -> usize {
        self.orders.len()
    }

    /// Fit of order `n` (1-based).
    pub fn order(&self, n: usize) -> Option<&ArOrderFit> {
        n.checked_sub(1).and_then(|i| self.orders.get(i))
    }
}

/// Accumulates the prewindowed product matrix of `(y_t, y_{t-1}, ..., y_{t-p})`.
#[derive(Debug, Clone)]
struct Prewindowed {
    phi: DMatrix<f64>,
    lags: Vec<f64>,
}

impl Prewindowed {
    fn new(order: usize) -> Self {
        Self {
            phi: DMatrix::zeros(order + 1, order + 1),
            lags: vec![0.0; order + 1],
        }
    }

    fn push(&mut self, y: f64) {
        self.lags.rotate_right(1);
        self.lags[0] = y;
        let p = self.lags.len();
        for i in 0..p {
            for j in 0..=i {
                let v = self.lags[i] * self.lags[j];
                self.phi[(i, j)] += v;
            }
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.phi[(i, j)]
        } else {
            self.phi[(j, i)]
        }
    }

    /// Order-recursive solution of the nested normal equations.
    ///
    /// The regressor block `R_ij = Σ y_{t-i} y_{t-j}` is factored once as
    /// `L Lᵀ`; the leading `p × p` factor belongs to order `p`, and the
    /// squared error of order `p` is `Φ_00 - Σ_{i<p} z_i²` with `z = L⁻¹ r`.
    /// Returns the fits of the orders whose pivots are numerically positive.
    fn solve(&self) -> Vec<ArOrderFit> {
        let n = self.lags.len() - 1;
        let scale = (0..=n).map(|i| self.get(i, i)).fold(0.0, f64::max);
        let floor = 1e-13 * scale;
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut z = vec![0.0; n];
        let mut energy = self.get(0, 0);
        let mut out = Vec::with_capacity(n);
        for p in 0..n {
            for j in 0..=p {
                let mut s = self.get(p + 1, j + 1);
                for k in 0..j {
                    s -= l[(p, k)] * l[(j, k)];
                }
                if j == p {
                    if s <= floor {
                        return out;
                    }
                    l[(p, p)] = s.sqrt();
                } else {
                    l[(p, j)] = s / l[(j, j)];
                }
            }
            let mut s = self.get(p + 1, 0);
            for k in 0..p {
                s -= l[(p, k)] * z[k];
            }
            z[p] = s / l[(p, p)];
            energy -= z[p] * z[p];
            let mut a = vec![0.0; p + 1];
            for i in (0..=p).rev() {
                let mut s = z[i];
                for k in i + 1..=p {
                    s -= l[(k, i)] * a[k];
                }
                a[i] = s / l[(i, i)];
            }
            a.iter_mut().for_each(|v| *v = -*v);
            out.push(ArOrderFit {
                a,
                sigma2_hat: energy.max(0.0),
            });
        }
        out
    }
}

fn check_series(series: &TimeSeries, n_max: usize) -> Result<()> {
    if n_max == 0 {
        return Err(Error::InvalidInput("maximum order must be at least 1".into()));
    }
    if series.len() <= n_max {
        return Err(Error::InvalidInput(format!(
            "series of length {} too short for order {n_max}",
            series.len()
        )));
    }
    if series.values().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("series is identically zero".into()));
    }
    Ok(())
}

/// Prewindowed least-squares AR fits of every order `1..=n_max`.
pub fn fit_ar_ladder(series: &TimeSeries, n_max: usize) -> Result<ArFitLadder> {
    check_series(series, n_max)?;
    let mut acc = Prewindowed::new(n_max);
    for &y in series.values() {
        acc.push(y);
    }
    let len = series.len();
    let mut orders = acc.solve();
    if orders.len() < n_max {
        return Err(Error::DegenerateInput(format!(
            "regressors are linearly dependent beyond order {}",
            orders.len()
        )));
    }
    for o in &mut orders {
        o.sigma2_hat /= len as f64;
    }
    Ok(ArFitLadder { len, orders })
}

/// Honest one-step prediction errors for orders `1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsErrors {
    /// First predicted time index (1-based).
    pub t0: usize,
    /// `errors[n-1][i]` is the error of order `n` at time `t0 + i`.
    pub errors: Vec<Vec<f64>>,
}

impl PlsErrors {
    /// `Σ_{t=t0}^{N} e_t²` per order.
    pub fn totals(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.iter().map(|v| v * v).sum()).collect()
    }
}

/// Predictive least squares: `y_t` is predicted for `t = t0..=N` by the AR
/// fit of each order on `y_1..y_{t-1}` only. Orders whose normal equations
/// are still singular at time `t` fall back to the highest solvable order.
pub fn pls_errors(series: &TimeSeries, n_max: usize, t0: usize) -> Result<PlsErrors> {
    check_series(series, n_max)?;
    let y = series.values();
    if t0 <= n_max || t0 > y.len() {
        return Err(Error::InvalidInput(format!(
            "PLS start {t0} must exceed the maximum order {n_max} and not exceed N = {}",
            y.len()
        )));
    }
    let mut acc = Prewindowed::new(n_max);
    for &v in &y[..t0 - 1] {
        acc.push(v);
    }
    let mut errors = vec![Vec::with_capacity(y.len() + 1 - t0); n_max];
    for t in t0..=y.len() {
        let fits = acc.solve();
        for (order, errs) in errors.iter_mut().enumerate() {
            let a = fits.get(order).or(fits.last()).map_or(&[][..], |f| &f.a[..]);
            let pred: f64 = -a.iter().enumerate().map(|(i, ai)| ai * y[t - 2 - i]).sum::<f64>();
            errs.push(y[t - 1] - pred);
        }
        acc.push(y[t - 1]);
    }
    Ok(PlsErrors { t0, errors })
}

/// Default PLS start index for candidate orders up to `n_max`.
pub fn default_pls_start(n_max: usize) -> usize {
    n_max + 10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, CoeffModel};

    /// Normal equations of order `n` solved directly.
    fn brute_force(y: &[f64], n: usize) -> (Vec<f64>, f64) {
        let lag = |t: usize, i: usize| if t >= i { y[t - i] } else { 0.0 };
        let mut r = DMatrix::<f64>::zeros(n, n);
        let mut c = nalgebra::DVector::<f64>::zeros(n);
        for t in 0..y.len() {
            for i in 0..n {
                c[i] += lag(t, i + 1) * y[t];
                for j in 0..n {
                    r[(i, j)] += lag(t, i + 1) * lag(t, j + 1);
                }
            }
        }
        let a = -r.lu().solve(&c).unwrap();
        let sse: f64 = (0..y.len())
            .map(|t| {
                let e = y[t] + (0..n).map(|i| a[i] * lag(t, i + 1)).sum::<f64>();
                e * e
            })
            .sum();
        (a.iter().copied().collect(), sse / y.len() as f64)
    }

    #[test]
    fn ladder_matches_normal_equations() {
        let model = CoeffModel::new(vec![-0.4, 0.3], vec![0.5], 1.0).unwrap();
        for seed in 0..20 {
            let s = simulate(&model, 40, 10, seed).unwrap();
            let ladder = fit_ar_ladder(&s, 6).unwrap();
            for n in 1..=6 {
                let (a, s2) = brute_force(s.values(), n);
                let fit = ladder.order(n).unwrap();
                assert!((fit.sigma2_hat - s2).abs() <= 1e-8 * s2.max(1.0));
                for (x, y) in fit.a.iter().zip(&a) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn ar1_estimate() {
        let model = CoeffModel::new(vec![-0.5], vec![], 1.0).unwrap();
        let s = simulate(&model, 10_100, 100, 3).unwrap();
        let ladder = fit_ar_ladder(&s, 3).unwrap();
        assert!((ladder.order(1).unwrap().a[0] + 0.5).abs() < 0.02);
    }

    #[test]
    fn white_noise_ladder_is_flat() {
        let s = simulate(&CoeffModel::white_noise(1.0).unwrap(), 5000, 0, 9).unwrap();
        let ladder = fit_ar_ladder(&s, 6).unwrap();
        let first = ladder.order(1).unwrap().sigma2_hat;
        let last = ladder.order(6).unwrap().sigma2_hat;
        assert!(last <= first && first - last < 0.01 * first);
        assert!(ladder.orders.iter().all(|o| o.a.iter().all(|a| a.abs() < 0.1)));
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let zero = TimeSeries::new(vec![0.0; 50]).unwrap();
        assert!(matches!(fit_ar_ladder(&zero, 3), Err(Error::DegenerateInput(_))));
        assert!(matches!(pls_errors(&zero, 3, 13), Err(Error::DegenerateInput(_))));
        let short = TimeSeries::new(vec![1.0, 2.0]).unwrap();
        assert!(fit_ar_ladder(&short, 2).is_err());
    }

    #[test]
    fn pls_matches_refitting_on_each_prefix() {
        let model = CoeffModel::new(vec![-0.6], vec![], 1.0).unwrap();
        let s = simulate(&model, 60, 20, 4).unwrap();
        let y = s.values();
        let pls = pls_errors(&s, 3, 13).unwrap();
        for n in 1..=3 {
            for t in 13..=y.len() {
                let (a, _) = brute_force(&y[..t - 1], n);
                let pred: f64 = -(0..n).map(|i| a[i] * y[t - 2 - i]).sum::<f64>();
                let got = pls.errors[n - 1][t - 13];
                assert!((got - (y[t - 1] - pred)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pls_start_validation() {
        let s = simulate(&CoeffModel::white_noise(1.0).unwrap(), 30, 0, 1).unwrap();
        assert!(pls_errors(&s, 6, 6).is_err());
        assert!(pls_errors(&s, 6, 31).is_err());
        assert_eq!(default_pls_start(6), 16);
    }
}
