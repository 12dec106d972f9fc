//! Asymptotic Fisher information of ARMA models.
//!
//! In the root parametrization every parameter `θ_u` acts on the
//! prediction errors through a causal filter,
//! `∂e_t/∂θ_u = Σ_{p≥1} d_{u,p} e_{t-p}`, so that
//! `J_{u,v} = Σ_p d_{u,p} d_{v,p}`. All the `d` series are damped
//! sinusoids, which lets every entry be summed in closed form.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{poly_mul, polynomial_roots, CoeffModel, ParamKind, RootConfig, RootModel};

/// Symmetric information matrix with a label for each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
    kinds: Vec<ParamKind>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn kinds(&self) -> &[ParamKind] {
        &self.kinds
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.matrix[(u, v)]
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Matrix as CSV with a header row of coordinate labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.kinds.iter().map(|k| k.label()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| format!("{}", self.matrix[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// One coordinate's `d` series written as `c · ρ^{p-1} · f(p φ)`, with
/// `f` either cosine or sine.
#[derive(Debug, Clone, Copy)]
struct DampedTrig {
    scale: f64,
    radius: f64,
    phase: f64,
    sine: bool,
}

/// Per-coordinate descriptions for the pole/zero part of `θ`.
fn damped_terms(config: RootConfig, theta: &[f64]) -> Vec<(ParamKind, DampedTrig)> {
    let kinds = config.param_kinds();
    let mut out = Vec::with_capacity(config.dim());
    for u in 0..config.dim() {
        let kind = kinds[u];
        let s = kind.sign();
        let term = match kind {
            ParamKind::RealPole | ParamKind::RealZero => DampedTrig {
                scale: s,
                radius: theta[u],
                phase: 0.0,
                sine: false,
            },
            // d_p = 2 S r^{p-1} cos(p φ)
            ParamKind::PoleMagnitude | ParamKind::ZeroMagnitude => DampedTrig {
                scale: 2.0 * s,
                radius: theta[u],
                phase: theta[u + 1],
                sine: false,
            },
            // d_p = -2 S r^p sin(p φ)
            ParamKind::PolePhase | ParamKind::ZeroPhase => DampedTrig {
                scale: -2.0 * s * theta[u - 1],
                radius: theta[u - 1],
                phase: theta[u],
                sine: true,
            },
            ParamKind::NoiseVariance => unreachable!("sigma2 has no d series"),
        };
        out.push((kind, term));
    }
    out
}

/// `Σ_{p≥1} z^{p-1} cos(p ψ)`.
fn cos_sum(z: f64, psi: f64) -> f64 {
    let c = psi.cos();
    (c - z) / (1.0 - 2.0 * z * c + z * z)
}

/// `Σ_{p≥1} z^{p-1} sin(p ψ)`.
fn sin_sum(z: f64, psi: f64) -> f64 {
    let c = psi.cos();
    psi.sin() / (1.0 - 2.0 * z * c + z * z)
}

/// `Σ_p d_{u,p} d_{v,p}` for two damped sinusoids, via product-to-sum.
fn damped_product_sum(x: &DampedTrig, y: &DampedTrig) -> f64 {
    let z = x.radius * y.radius;
    let diff = x.phase - y.phase;
    let sum = x.phase + y.phase;
    let inner = match (x.sine, y.sine) {
        (false, false) => 0.5 * (cos_sum(z, diff) + cos_sum(z, sum)),
        (true, true) => 0.5 * (cos_sum(z, diff) - cos_sum(z, sum)),
        (false, true) => 0.5 * (sin_sum(z, sum) - sin_sum(z, diff)),
        (true, false) => 0.5 * (sin_sum(z, sum) + sin_sum(z, diff)),
    };
    x.scale * y.scale * inner
}

/// The pole/zero block of `J(θ)` for a parameter vector of the given
/// configuration. Entries between a real root and any other coordinate use
/// the dedicated closed forms; entries between two complex-pair
/// coordinates use the general damped-sinusoid sum.
pub fn fim_block(config: RootConfig, theta: &[f64]) -> DMatrix<f64> {
    let k = config.dim();
    let terms = damped_terms(config, theta);
    let mut j = DMatrix::<f64>::zeros(k, k);
    for u in 0..k {
        for v in u..k {
            let value = entry(&terms, theta, u, v);
            j[(u, v)] = value;
            j[(v, u)] = value;
        }
    }
    j
}

fn is_real(kind: ParamKind) -> bool {
    matches!(kind, ParamKind::RealPole | ParamKind::RealZero)
}

fn is_magnitude(kind: ParamKind) -> bool {
    matches!(kind, ParamKind::PoleMagnitude | ParamKind::ZeroMagnitude)
}

fn entry(terms: &[(ParamKind, DampedTrig)], theta: &[f64], u: usize, v: usize) -> f64 {
    let (ku, _) = terms[u];
    let (kv, _) = terms[v];
    let (u, v, ku, kv) = if !is_real(ku) && is_real(kv) {
        (v, u, kv, ku)
    } else {
        (u, v, ku, kv)
    };
    let ss = ku.sign() * kv.sign();
    if is_real(ku) && is_real(kv) {
        return ss / (1.0 - theta[u] * theta[v]);
    }
    if is_real(ku) {
        if is_magnitude(kv) {
            let x = theta[u] * theta[v];
            let c = theta[v + 1].cos();
            return 2.0 * ss * (c - x) / (1.0 - 2.0 * x * c + x * x);
        }
        let r = theta[v - 1];
        let phi = theta[v];
        let x = theta[u] * r;
        return -2.0 * ss * r * phi.sin() / (1.0 - 2.0 * x * phi.cos() + x * x);
    }
    damped_product_sum(&terms[u].1, &terms[v].1)
}

/// Full information matrix of a root-form model; the sigma2 coordinate
/// (diagonal `1/(2σ⁴)`, decoupled) is appended when `include_sigma` is set.
pub fn fim_root(model: &RootModel, include_sigma: bool) -> FisherMatrix {
    let config = model.config();
    let block = fim_block(config, &model.theta());
    let mut kinds = config.param_kinds();
    if !include_sigma {
        kinds.pop();
        return FisherMatrix { matrix: block, kinds };
    }
    let k = config.dim();
    let mut matrix = DMatrix::<f64>::zeros(k + 1, k + 1);
    matrix.view_mut((0, 0), (k, k)).copy_from(&block);
    matrix[(k, k)] = 1.0 / (2.0 * model.sigma2() * model.sigma2());
    FisherMatrix { matrix, kinds }
}

/// `d_{v,1..=p_max}` for coordinate `v` of the flattened parameter vector.
///
/// Real roots: `S θ^{p-1}`. Magnitudes: `2 S cos φ` at `p = 1`, otherwise
/// `2 S (r^p sin(pφ) cos φ - r^{p-1} sin((p-1)φ) r) / (r sin φ)`. Phases:
/// `-2 S r^p sin(pφ)`.
pub fn deriv_series_coeffs(model: &RootModel, v: usize, p_max: usize) -> Result<Vec<f64>> {
    let config = model.config();
    if v >= config.dim() {
        return Err(Error::InvalidInput(format!(
            "index {v} is not a pole/zero coordinate (dimension {})",
            config.dim()
        )));
    }
    let theta = model.theta();
    let kind = config.param_kinds()[v];
    let s = kind.sign();
    let series = (1..=p_max)
        .map(|p| {
            let pf = p as f64;
            match kind {
                ParamKind::RealPole | ParamKind::RealZero => s * theta[v].powi(p as i32 - 1),
                ParamKind::PoleMagnitude | ParamKind::ZeroMagnitude => {
                    let r = theta[v];
                    let phi = theta[v + 1];
                    if p == 1 {
                        2.0 * s * phi.cos()
                    } else {
                        2.0 * s
                            * (r.powi(p as i32) * (pf * phi).sin() * phi.cos()
                                - r.powi(p as i32 - 1) * ((pf - 1.0) * phi).sin() * r)
                            / (r * phi.sin())
                    }
                }
                ParamKind::PolePhase | ParamKind::ZeroPhase => {
                    let r = theta[v - 1];
                    let phi = theta[v];
                    -2.0 * s * r.powi(p as i32) * (pf * phi).sin()
                }
                ParamKind::NoiseVariance => unreachable!(),
            }
        })
        .collect();
    Ok(series)
}

/// Autocovariances `r_0..r_lags` of a unit-variance-driven AR process,
/// from the Yule-Walker system `Σ_i a_i r_{|k-i|} = δ_k`, `a_0 = 1`.
pub fn ar_autocovariances(a: &[f64], lags: usize) -> Result<Vec<f64>> {
    let n = a.len();
    if polynomial_roots(a).iter().any(|z| z.norm() >= 1.0) {
        return Err(Error::Inadmissible("AR polynomial is not stable".into()));
    }
    let coeff = |i: usize| if i == 0 { 1.0 } else { a[i - 1] };
    let mut sys = DMatrix::<f64>::zeros(n + 1, n + 1);
    for k in 0..=n {
        for i in 0..=n {
            let lag = k.abs_diff(i);
            sys[(k, lag)] += coeff(i);
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[0] = 1.0;
    let r = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Yule-Walker system".into()))?;
    let mut out: Vec<f64> = r.iter().copied().collect();
    for k in n + 1..=lags {
        let next = -(1..=n).map(|i| a[i - 1] * out[k - i]).sum::<f64>();
        out.push(next);
    }
    out.truncate(lags + 1);
    Ok(out)
}

/// Information matrix of a pure AR model in coefficient coordinates:
/// the Toeplitz covariance of `y_t / σ` and the decoupled `1/(2σ⁴)`.
pub fn fim_ar_coeff(model: &CoeffModel) -> Result<FisherMatrix> {
    if model.m() != 0 {
        return Err(Error::InvalidInput("coefficient-space information needs a pure AR model".into()));
    }
    let n = model.n();
    let r = ar_autocovariances(model.a(), n)?;
    let mut matrix = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = r[i.abs_diff(j)];
        }
    }
    matrix[(n, n)] = 1.0 / (2.0 * model.sigma2() * model.sigma2());
    let mut kinds = vec![ParamKind::RealPole; n];
    kinds.push(ParamKind::NoiseVariance);
    Ok(FisherMatrix { matrix, kinds })
}

/// Jacobian `∂(a, b)/∂θ` of the coefficients with respect to the
/// pole/zero parameters. Block diagonal: poles only move `a`.
pub fn root_jacobian(model: &RootModel) -> DMatrix<f64> {
    let config = model.config();
    let n = config.n;
    let k = config.dim();
    let mut jac = DMatrix::<f64>::zeros(k, k);

    fill_jacobian_block(&mut jac, 0, model.real_poles(), model.complex_poles());
    fill_jacobian_block(&mut jac, n, model.real_zeros(), model.complex_zeros());
    jac
}

fn fill_jacobian_block(
    jac: &mut DMatrix<f64>,
    offset: usize,
    reals: &[f64],
    pairs: &[crate::model::ComplexPair],
) {
    let factors: Vec<Vec<f64>> = reals
        .iter()
        .map(|&g| vec![1.0, -g])
        .chain(
            pairs
                .iter()
                .map(|p| vec![1.0, -2.0 * p.magnitude * p.phase.cos(), p.magnitude * p.magnitude]),
        )
        .collect();
    let rest = |skip: usize| {
        factors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .fold(vec![1.0], |acc, (_, f)| poly_mul(&acc, f))
    };
    let mut col = offset;
    for i in 0..reals.len() {
        let d = poly_mul(&[0.0, -1.0], &rest(i));
        write_column(jac, offset, col, &d);
        col += 1;
    }
    for (j, p) in pairs.iter().enumerate() {
        let r = rest(reals.len() + j);
        let (mag, phi) = (p.magnitude, p.phase);
        let d_mag = poly_mul(&[0.0, -2.0 * phi.cos(), 2.0 * mag], &r);
        let d_phase = poly_mul(&[0.0, 2.0 * mag * phi.sin()], &r);
        write_column(jac, offset, col, &d_mag);
        write_column(jac, offset, col + 1, &d_phase);
        col += 2;
    }
}

/// Writes the coefficients `c_1..` of a derivative polynomial (constant
/// term, always zero, skipped) into a Jacobian column.
fn write_column(jac: &mut DMatrix<f64>, offset: usize, col: usize, poly: &[f64]) {
    let degree = jac.nrows();
    for (i, &c) in poly.iter().enumerate().skip(1) {
        let row = offset + i - 1;
        if row < degree {
            jac[(row, col)] = c;
        }
    }
}

/// Integrand value `|J|^{1/2}` of the pole/zero block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SqrtDet {
    Finite(f64),
    /// The determinant overflows `f64`.
    Overflow,
    /// Non-finite entries or a block that is not numerically positive definite.
    Invalid,
}

impl SqrtDet {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            _ => None,
        }
    }
}

const PIVOT_FLOOR: f64 = 1e-300;

/// `ln |J|` of a symmetric block via Cholesky, with a symmetric
/// eigendecomposition fallback. `None` when the block is not positive
/// definite or has non-finite entries.
pub fn log_det_spd(block: DMatrix<f64>) -> Option<f64> {
    if block.iter().any(|x| !x.is_finite()) {
        return None;
    }
    if block.nrows() == 0 {
        return Some(0.0);
    }
    if let Some(chol) = block.clone().cholesky() {
        let l = chol.l_dirty();
        let mut acc = 0.0;
        let mut ok = true;
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            if !(d > PIVOT_FLOOR) {
                ok = false;
                break;
            }
            acc += 2.0 * d.ln();
        }
        if ok {
            return Some(acc);
        }
    }
    let eig = block.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l > PIVOT_FLOOR) {
        Some(eig.eigenvalues.iter().map(|l| l.ln()).sum())
    } else {
        None
    }
}

/// `|J(θ)|^{1/2}` for the pole/zero coordinates only.
pub fn sqrt_det_fim(model: &RootModel) -> SqrtDet {
    sqrt_det_theta(model.config(), &model.theta())
}

pub fn sqrt_det_theta(config: RootConfig, theta: &[f64]) -> SqrtDet {
    match log_det_spd(fim_block(config, theta)) {
        None => SqrtDet::Invalid,
        Some(ld) => {
            let v = (0.5 * ld).exp();
            if v.is_finite() {
                SqrtDet::Finite(v)
            } else {
                SqrtDet::Overflow
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComplexPair;
    use std::f64::consts::PI;

    #[test]
    fn ar1_entries() {
        let m = RootModel::ar(vec![0.5], vec![], 1.0).unwrap();
        let j = fim_root(&m, false);
        assert!((j.get(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        let m0 = RootModel::ar(vec![0.0], vec![], 1.0).unwrap();
        assert_eq!(fim_root(&m0, false).get(0, 0), 1.0);
    }

    #[test]
    fn arma11_cross_entry() {
        let m = RootModel::new(vec![0.5], vec![], vec![-0.8], vec![], 1.0).unwrap();
        let j = fim_root(&m, true);
        assert!((j.get(0, 1) + 1.0 / 1.4).abs() < 1e-15);
        assert!((j.get(2, 2) - 0.5).abs() < 1e-15);
        assert_eq!(j.get(0, 2), 0.0);
        assert_eq!(j.kinds()[2], ParamKind::NoiseVariance);
    }

    #[test]
    fn ar2_complex_pair_matches_series() {
        let m = RootModel::ar(vec![], vec![ComplexPair::new(0.7, 1.1)], 1.0).unwrap();
        let j = fim_root(&m, false);
        for u in 0..2 {
            for v in 0..2 {
                let du = deriv_series_coeffs(&m, u, 200).unwrap();
                let dv = deriv_series_coeffs(&m, v, 200).unwrap();
                let s: f64 = du.iter().zip(&dv).map(|(x, y)| x * y).sum();
                assert!((j.get(u, v) - s).abs() < 1e-12, "({u},{v}) {} vs {s}", j.get(u, v));
            }
        }
    }

    #[test]
    fn deriv_series_examples() {
        let m = RootModel::ar(vec![0.6], vec![ComplexPair::new(0.9, PI / 2.0)], 1.0).unwrap();
        // Real pole: -S g^{p-1} with S = -1.
        let d = deriv_series_coeffs(&m, 0, 3).unwrap();
        assert_eq!(d, vec![-1.0, -0.6, -0.36]);
        let d_mag = deriv_series_coeffs(&m, 1, 1).unwrap();
        assert!((d_mag[0] - (-2.0 * (PI / 2.0).cos())).abs() < 1e-15);
        let d_phase = deriv_series_coeffs(&m, 2, 2).unwrap();
        assert!(d_phase[1].abs() < 1e-15);
        assert!(deriv_series_coeffs(&m, 3, 2).is_err());
    }

    #[test]
    fn ar_coeff_information() {
        let c = CoeffModel::new(vec![-0.5], vec![], 2.0).unwrap();
        let j = fim_ar_coeff(&c).unwrap();
        assert!((j.get(0, 0) - 4.0 / 3.0).abs() < 1e-14);
        assert!((j.get(1, 1) - 1.0 / 8.0).abs() < 1e-15);
        let wn = CoeffModel::new(vec![0.0, 0.0], vec![], 1.0).unwrap();
        let j = fim_ar_coeff(&wn).unwrap();
        assert_eq!(j.matrix().view((0, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert!(fim_ar_coeff(&CoeffModel::new(vec![0.1], vec![0.2], 1.0).unwrap()).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let m = RootModel::ar(vec![0.3], vec![], 1.0).unwrap();
        assert_eq!(root_jacobian(&m)[(0, 0)], -1.0);
        let (r, phi) = (0.8, 0.9);
        let m = RootModel::ar(vec![], vec![ComplexPair::new(r, phi)], 1.0).unwrap();
        let j = root_jacobian(&m);
        let expected = [[-2.0 * phi.cos(), 2.0 * r * phi.sin()], [2.0 * r, 0.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[(i, k)] - expected[i][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sqrt_det_examples() {
        let g: f64 = 0.5;
        let m = RootModel::ar(vec![g], vec![], 1.0).unwrap();
        let v = sqrt_det_fim(&m).value().unwrap();
        assert!((v - 1.0 / (1.0 - g * g).sqrt()).abs() < 1e-14);

        let (g, h): (f64, f64) = (0.5, -0.8);
        let m = RootModel::new(vec![g], vec![], vec![h], vec![], 1.0).unwrap();
        let det = 1.0 / ((1.0 - g * g) * (1.0 - h * h)) - 1.0 / (1.0 - g * h).powi(2);
        let v = sqrt_det_fim(&m).value().unwrap();
        assert!((v - det.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn invalid_blocks_are_signalled() {
        let cfg = RootConfig::new(1, 0, 1, 0).unwrap();
        assert_eq!(sqrt_det_theta(cfg, &[1.0]), SqrtDet::Invalid);
        assert_eq!(sqrt_det_theta(cfg, &[f64::NAN]), SqrtDet::Invalid);
    }

    #[test]
    fn matrix_csv_has_labels() {
        let m = RootModel::ar(vec![0.5], vec![], 1.0).unwrap();
        let csv = fim_root(&m, true).to_csv();
        assert!(csv.starts_with("pole,sigma2\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
