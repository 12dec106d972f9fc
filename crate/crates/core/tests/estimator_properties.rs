use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stoc_order::estimators::{arma_cost_gradient, fit_ar_ladder, pls_errors};
use stoc_order::model::{arma_filter, TimeSeries};

/// A short series driven by bounded noise through a stable AR(2) filter.
fn series(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0..1.0f64, min_len..=max_len), -0.45..0.45f64, -0.5..0.5f64)
        .prop_map(|(e, a1, a2)| arma_filter(&[a1, a2], &[], &e))
}

/// Prewindowed least squares of order `n` via an SVD solve of the stacked
/// regression `y_t ≈ -Σ a_i y_{t-i}`.
fn reference_fit(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let len = y.len();
    let x = DMatrix::from_fn(len, n, |t, i| if t > i { -y[t - 1 - i] } else { 0.0 });
    let rhs = DVector::from_column_slice(y);
    let a = x.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
    let resid = rhs - &x * &a;
    (a.iter().copied().collect(), resid.norm_squared() / len as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ladder_matches_direct_least_squares(y in series(30, 120)) {
        let ts = TimeSeries::new(y.clone()).unwrap();
        let ladder = fit_ar_ladder(&ts, 5).unwrap();
        for n in 1..=5 {
            let fit = ladder.order(n).unwrap();
            let (a, s2) = reference_fit(&y, n);
            for (x, r) in fit.a.iter().zip(&a) {
                prop_assert!((x - r).abs() < 1e-8, "order {}: {:?} vs {:?}", n, fit.a, a);
            }
            prop_assert!((fit.sigma2_hat - s2).abs() < 1e-10 * s2.max(1e-300) + 1e-14);
        }
    }

    #[test]
    fn residual_variance_never_increases_with_order(y in series(20, 200)) {
        let ladder = fit_ar_ladder(&TimeSeries::new(y).unwrap(), 8).unwrap();
        for w in ladder.orders.windows(2) {
            prop_assert!(w[1].sigma2_hat <= w[0].sigma2_hat * (1.0 + 1e-12));
        }
    }

    #[test]
    fn predictive_errors_ignore_the_future(y in series(40, 100), cut in 0usize..30, noise in prop::collection::vec(-5.0..5.0f64, 100)) {
        let n_max = 4;
        let t0 = 10;
        let cut = t0 + cut;
        let mut tainted = y.clone();
        for (t, v) in tainted.iter_mut().enumerate().skip(cut) {
            *v += noise[t % noise.len()] + 1.0;
        }
        let clean = pls_errors(&TimeSeries::new(y).unwrap(), n_max, t0).unwrap();
        let dirty = pls_errors(&TimeSeries::new(tainted).unwrap(), n_max, t0).unwrap();
        // Error at time t (1-based) uses y_1..y_t only; the taint starts at t = cut + 1.
        for (c, d) in clean.errors.iter().zip(&dirty.errors) {
            let untouched = cut + 1 - t0;
            prop_assert_eq!(&c[..untouched], &d[..untouched]);
            prop_assert!(c[untouched] != d[untouched]);
        }
    }

    #[test]
    fn cost_gradient_matches_finite_differences(
        y in series(60, 150),
        a1 in -0.7..0.7f64,
        b1 in -0.7..0.7f64,
        b2 in -0.2..0.2f64,
    ) {
        let a = vec![a1];
        let b = vec![b1, b2];
        let (_, grad) = arma_cost_gradient(&y, &a, &b);
        let mut params = [a1, b1, b2];
        let h = 1e-6;
        for k in 0..3 {
            let cost_at = |p: &[f64; 3]| arma_cost_gradient(&y, &p[..1], &p[1..]).0;
            params[k] += h;
            let up = cost_at(&params);
            params[k] -= 2.0 * h;
            let down = cost_at(&params);
            params[k] += h;
            let fd = (up - down) / (2.0 * h);
            prop_assert!((grad[k] - fd).abs() <= 1e-5 * grad[k].abs().max(fd.abs()).max(1e-3), "k={}: {} vs {}", k, grad[k], fd);
        }
    }
}
