use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;

use stoc_order::fisher::{deriv_series_coeffs, fim_ar_coeff, fim_root, root_jacobian, sqrt_det_fim};
use stoc_order::model::{coeffs_to_roots, ComplexPair, RootConfig, RootModel};

/// Roots of a random model with magnitudes at most 0.9 and every pair of
/// roots (conjugates included) at least 0.1 apart.
#[derive(Debug, Clone)]
struct Roots {
    real_poles: Vec<f64>,
    complex_poles: Vec<ComplexPair>,
    real_zeros: Vec<f64>,
    complex_zeros: Vec<ComplexPair>,
}

impl Roots {
    fn all(&self) -> Vec<Complex<f64>> {
        let mut out: Vec<Complex<f64>> = self
            .real_poles
            .iter()
            .chain(&self.real_zeros)
            .map(|&r| Complex::new(r, 0.0))
            .collect();
        for p in self.complex_poles.iter().chain(&self.complex_zeros) {
            out.push(p.root());
            out.push(p.root().conj());
        }
        out
    }

    fn separated(&self) -> bool {
        let z = self.all();
        (0..z.len()).all(|i| (i + 1..z.len()).all(|j| (z[i] - z[j]).norm() >= 0.1))
    }

    fn arma(&self) -> RootModel {
        RootModel::new(
            self.real_poles.clone(),
            self.complex_poles.clone(),
            self.real_zeros.clone(),
            self.complex_zeros.clone(),
            1.0,
        )
        .unwrap()
    }

    /// The pure AR model with every root as a pole.
    fn as_ar(&self) -> RootModel {
        let reals = [self.real_poles.clone(), self.real_zeros.clone()].concat();
        let pairs = [self.complex_poles.clone(), self.complex_zeros.clone()].concat();
        RootModel::ar(reals, pairs, 1.0).unwrap()
    }

    /// Position of each ARMA coordinate in the layout of [`Roots::as_ar`],
    /// with the sign that zero coordinates pick up.
    fn ar_index(&self) -> Vec<(usize, f64)> {
        let ar = self.as_ar();
        let reals = ar.real_poles();
        let pairs = ar.complex_poles();
        let real_at = |x: f64| reals.iter().position(|&y| y == x).unwrap();
        let pair_at = |p: &ComplexPair| reals.len() + 2 * pairs.iter().position(|q| q == p).unwrap();
        let arma = self.arma();
        let mut out = Vec::new();
        out.extend(arma.real_poles().iter().map(|&x| (real_at(x), 1.0)));
        for p in arma.complex_poles() {
            out.extend([(pair_at(p), 1.0), (pair_at(p) + 1, 1.0)]);
        }
        out.extend(arma.real_zeros().iter().map(|&x| (real_at(x), -1.0)));
        for p in arma.complex_zeros() {
            out.extend([(pair_at(p), -1.0), (pair_at(p) + 1, -1.0)]);
        }
        out
    }
}

fn pair() -> impl Strategy<Value = ComplexPair> {
    (0.05..0.9f64, 0.1..3.04f64).prop_map(|(r, phi)| ComplexPair::new(r, phi))
}

fn roots(max_poles: usize, max_zeros: usize) -> impl Strategy<Value = Roots> {
    (0..=max_poles, 0..=max_zeros)
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-0.9..0.9f64, n % 2),
                prop::collection::vec(pair(), n / 2),
                prop::collection::vec(-0.9..0.9f64, m % 2),
                prop::collection::vec(pair(), m / 2),
            )
        })
        .prop_map(|(rp, cp, rz, cz)| Roots {
            real_poles: rp,
            complex_poles: cp,
            real_zeros: rz,
            complex_zeros: cz,
        })
        .prop_filter("roots must be separated and non-empty", |r| !r.all().is_empty() && r.separated())
}

/// Coefficients `c_1..c_len` of `ln(1 + Σ q_i z^i)` from
/// `p c_p = p q_p - Σ_{k<p} k c_k q_{p-k}`.
fn log_series(q: &[f64], len: usize) -> Vec<f64> {
    let coeff = |i: usize| if i >= 1 && i <= q.len() { q[i - 1] } else { 0.0 };
    let mut c = vec![0.0; len + 1];
    for p in 1..=len {
        let s: f64 = (1..p).map(|k| k as f64 * c[k] * coeff(p - k)).sum();
        c[p] = (p as f64 * coeff(p) - s) / p as f64;
    }
    c.remove(0);
    c
}

/// `ln A(z) - ln B(z)` to `len` terms; its `θ`-derivative is the
/// sensitivity filter of the prediction errors.
fn log_ratio(model: &RootModel, len: usize) -> Vec<f64> {
    let c = model.to_coeffs().unwrap();
    let la = log_series(c.a(), len);
    let lb = log_series(c.b(), len);
    la.iter().zip(&lb).map(|(x, y)| x - y).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn sorted(mut z: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_is_symmetric_positive_definite(r in roots(4, 4)) {
        let j = fim_root(&r.arma(), true);
        let m = j.matrix();
        for u in 0..j.dim() {
            for v in 0..j.dim() {
                prop_assert_eq!(m[(u, v)], m[(v, u)]);
            }
        }
        prop_assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn determinant_matches_all_pole_model(r in roots(3, 3)) {
        let arma = fim_root(&r.arma(), false);
        let ar = fim_root(&r.as_ar(), false);
        let map = r.ar_index();
        for (u, &(pu, su)) in map.iter().enumerate() {
            for (v, &(pv, sv)) in map.iter().enumerate() {
                let expect = su * sv * ar.get(pu, pv);
                prop_assert!(rel_close(arma.get(u, v), expect, 1e-12), "({}, {}): {} vs {}", u, v, arma.get(u, v), expect);
            }
        }
        prop_assert!(rel_close(arma.determinant(), ar.determinant(), 1e-9));
        let a = sqrt_det_fim(&r.arma()).value().unwrap();
        let b = sqrt_det_fim(&r.as_ar()).value().unwrap();
        prop_assert!(rel_close(a, b, 1e-9));
    }

    #[test]
    fn closed_form_matches_truncated_series(r in roots(3, 3)) {
        let model = r.arma();
        let j = fim_root(&model, false);
        let d: Vec<Vec<f64>> = (0..j.dim()).map(|v| deriv_series_coeffs(&model, v, 500).unwrap()).collect();
        for u in 0..j.dim() {
            for v in 0..j.dim() {
                let s: f64 = d[u].iter().zip(&d[v]).map(|(x, y)| x * y).sum();
                prop_assert!(rel_close(j.get(u, v), s, 1e-10), "({}, {}): {} vs {}", u, v, j.get(u, v), s);
            }
        }
    }

    #[test]
    fn derivative_series_match_perturbed_log_ratio(r in roots(3, 3)) {
        let model = r.arma();
        let config = model.config();
        let theta = model.theta();
        let h = 1e-6;
        for v in 0..config.dim() {
            let shifted = |delta: f64| {
                let mut t = theta.clone();
                t[v] += delta;
                log_ratio(&RootModel::from_theta(config, &t, 1.0).unwrap(), 40)
            };
            let (up, down) = (shifted(h), shifted(-h));
            let d = deriv_series_coeffs(&model, v, 40).unwrap();
            for p in 0..40 {
                let fd = (up[p] - down[p]) / (2.0 * h);
                prop_assert!((d[p] - fd).abs() < 1e-6 * d[p].abs().max(1.0), "v={} p={}: {} vs {}", v, p + 1, d[p], fd);
            }
        }
    }

    #[test]
    fn root_determinant_factorises_through_coefficients(r in roots(5, 0)) {
        let model = r.arma();
        let n = model.n();
        let coeff = fim_ar_coeff(&model.to_coeffs().unwrap()).unwrap();
        let r_zz: DMatrix<f64> = coeff.matrix().view((0, 0), (n, n)).into_owned();
        let jac = root_jacobian(&model);
        let lhs = fim_root(&model, false).determinant();
        let rhs = r_zz.determinant() * jac.determinant().powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn vieta_round_trip(r in roots(5, 5)) {
        let model = r.arma();
        let coeffs = model.to_coeffs().unwrap();
        let back = coeffs_to_roots(&coeffs).unwrap();
        prop_assert_eq!(back.config(), model.config());
        for (x, y) in sorted(back.poles()).iter().zip(sorted(model.poles())) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        for (x, y) in sorted(back.zeros()).iter().zip(sorted(model.zeros())) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        let again = back.to_coeffs().unwrap();
        for (x, y) in again.a().iter().chain(again.b()).zip(coeffs.a().iter().chain(coeffs.b())) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn config_of_generated_models_is_default_layout() {
    let m = RootModel::new(vec![0.2], vec![ComplexPair::new(0.5, 1.0)], vec![], vec![ComplexPair::new(0.6, 2.0)], 1.0).unwrap();
    assert_eq!(m.config(), RootConfig::new(3, 2, 1, 0).unwrap());
}
