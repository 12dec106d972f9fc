//! ARMA model representations and the prediction-error filter.
//!
//! A model is held either in coefficient form ([`CoeffModel`], the
//! polynomials `A(q) = 1 + a_1 q^-1 + ... + a_n q^-n` and
//! `B(q) = 1 + b_1 q^-1 + ... + b_m q^-m`) or in root form ([`RootModel`],
//! real roots plus magnitude/phase pairs for conjugate roots). Both forms
//! enforce stability, minimum phase, and the absence of repeated roots or
//! pole-zero cancellations.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closeness thresholds for the degenerate cases excluded by the root
/// parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Two roots of the same polynomial closer than this are "repeated".
    pub repeat: f64,
    /// A pole and a zero closer than this cancel.
    pub cancel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            repeat: 1e-6,
            cancel: 1e-6,
        }
    }
}

/// Roots with |imaginary part| below this (relative to max(1, |z|)) are
/// treated as real after polishing.
const IMAG_ZERO: f64 = 1e-9;

/// ARMA(n, m) in coefficient form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffModel {
    a: Vec<f64>,
    b: Vec<f64>,
    sigma2: f64,
}

impl CoeffModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>, sigma2: f64) -> Result<Self> {
        Self::with_tolerances(a, b, sigma2, &Tolerances::default())
    }

    pub fn with_tolerances(a: Vec<f64>, b: Vec<f64>, sigma2: f64, tol: &Tolerances) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Inadmissible(format!("sigma2 must be positive, got {sigma2}")));
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let poles = polynomial_roots(&a);
        let zeros = polynomial_roots(&b);
        if let Some(p) = poles.iter().find(|z| z.norm() >= 1.0) {
            return Err(Error::Inadmissible(format!("unstable pole with modulus {}", p.norm())));
        }
        if let Some(z) = zeros.iter().find(|z| z.norm() >= 1.0) {
            return Err(Error::Inadmissible(format!("non-minimum-phase zero with modulus {}", z.norm())));
        }
        check_cancellation(&poles, &zeros, tol.cancel)?;
        Ok(Self { a, b, sigma2 })
    }

    /// Builds a model after checking only stability, minimum phase and
    /// sigma2; repeated roots and near cancellations are allowed. Used for
    /// fitted models of over-parametrized structures.
    pub fn stable_unchecked(a: Vec<f64>, b: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Inadmissible(format!("sigma2 must be positive, got {sigma2}")));
        }
        if max_root_modulus(&a) >= 1.0 || max_root_modulus(&b) >= 1.0 {
            return Err(Error::Inadmissible("root on or outside the unit circle".into()));
        }
        Ok(Self { a, b, sigma2 })
    }

    pub fn white_noise(sigma2: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), sigma2)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Number of free parameters, `n + m + 1`.
    pub fn k(&self) -> usize {
        self.n() + self.m() + 1
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Inadmissible(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self {
            sigma2,
            ..self.clone()
        })
    }

    pub fn to_roots(&self) -> Result<RootModel> {
        coeffs_to_roots(self)
    }
}

/// Structure and root-type configuration: `n1` of the `n` poles and `m1`
/// of the `m` zeros are real.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RootConfig {
    pub n: usize,
    pub m: usize,
    pub n1: usize,
    pub m1: usize,
}

impl RootConfig {
    pub fn new(n: usize, m: usize, n1: usize, m1: usize) -> Result<Self> {
        if n1 > n || m1 > m || (n - n1) % 2 != 0 || (m - m1) % 2 != 0 {
            return Err(Error::Config(format!(
                "invalid root configuration n={n} m={m} n1={n1} m1={m1}"
            )));
        }
        Ok(Self { n, m, n1, m1 })
    }

    /// The configuration used by default for a structure: every pole and
    /// zero complex when the count is even, exactly one real root when odd.
    pub fn default_for(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            n1: n % 2,
            m1: m % 2,
        }
    }

    /// All valid configurations of a structure.
    pub fn all_for(n: usize, m: usize) -> Vec<Self> {
        let mut out = Vec::new();
        for n1 in (n % 2..=n).step_by(2) {
            for m1 in (m % 2..=m).step_by(2) {
                out.push(Self { n, m, n1, m1 });
            }
        }
        out
    }

    /// The pure-AR configuration with the same determinant, obtained by
    /// treating every zero as an extra pole.
    pub fn ar_equivalent(&self) -> Self {
        Self {
            n: self.n + self.m,
            m: 0,
            n1: self.n1 + self.m1,
            m1: 0,
        }
    }

    /// Dimension of the pole/zero parameter vector (sigma2 excluded).
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn pole_pairs(&self) -> usize {
        (self.n - self.n1) / 2
    }

    pub fn zero_pairs(&self) -> usize {
        (self.m - self.m1) / 2
    }

    /// Kind of every entry of the flattened parameter vector, sigma2 last.
    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut kinds = Vec::with_capacity(self.dim() + 1);
        kinds.extend(std::iter::repeat(ParamKind::RealPole).take(self.n1));
        for _ in 0..self.pole_pairs() {
            kinds.push(ParamKind::PoleMagnitude);
            kinds.push(ParamKind::PolePhase);
        }
        kinds.extend(std::iter::repeat(ParamKind::RealZero).take(self.m1));
        for _ in 0..self.zero_pairs() {
            kinds.push(ParamKind::ZeroMagnitude);
            kinds.push(ParamKind::ZeroPhase);
        }
        kinds.push(ParamKind::NoiseVariance);
        kinds
    }

    /// Zero-based index sets of the parameter vector.
    pub fn index_sets(&self) -> IndexSets {
        let mut sets = IndexSets::default();
        for (i, kind) in self.param_kinds().into_iter().enumerate() {
            match kind {
                ParamKind::RealPole => sets.pole_real.push(i),
                ParamKind::PoleMagnitude => sets.pole_magnitude.push(i),
                ParamKind::PolePhase => sets.pole_phase.push(i),
                ParamKind::RealZero => sets.zero_real.push(i),
                ParamKind::ZeroMagnitude => sets.zero_magnitude.push(i),
                ParamKind::ZeroPhase => sets.zero_phase.push(i),
                ParamKind::NoiseVariance => {}
            }
        }
        sets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    RealPole,
    PoleMagnitude,
    PolePhase,
    RealZero,
    ZeroMagnitude,
    ZeroPhase,
    NoiseVariance,
}

impl ParamKind {
    pub fn is_pole(self) -> bool {
        matches!(self, Self::RealPole | Self::PoleMagnitude | Self::PolePhase)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Self::RealZero | Self::ZeroMagnitude | Self::ZeroPhase)
    }

    /// -1 for pole parameters, +1 for zero parameters.
    pub fn sign(self) -> f64 {
        if self.is_pole() {
            -1.0
        } else {
            1.0
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::RealPole => "pole",
            Self::PoleMagnitude => "pole_mag",
            Self::PolePhase => "pole_phase",
            Self::RealZero => "zero",
            Self::ZeroMagnitude => "zero_mag",
            Self::ZeroPhase => "zero_phase",
            Self::NoiseVariance => "sigma2",
        }
    }
}

/// Zero-based positions of each parameter kind in the flattened vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub pole_real: Vec<usize>,
    pub pole_magnitude: Vec<usize>,
    pub pole_phase: Vec<usize>,
    pub zero_real: Vec<usize>,
    pub zero_magnitude: Vec<usize>,
    pub zero_phase: Vec<usize>,
}

/// A conjugate root pair `r e^{±iφ}` with `0 < r < 1`, `0 < φ < π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair {
    pub magnitude: f64,
    pub phase: f64,
}

impl ComplexPair {
    pub fn new(magnitude: f64, phase: f64) -> Self {
        Self { magnitude, phase }
    }

    pub fn root(&self) -> Complex<f64> {
        Complex::from_polar(self.magnitude, self.phase)
    }
}

/// ARMA(n, m) in root form.
#[derive(Debug, Clone, PartialEq)]
pub struct RootModel {
    real_poles: Vec<f64>,
    complex_poles: Vec<ComplexPair>,
    real_zeros: Vec<f64>,
    complex_zeros: Vec<ComplexPair>,
    sigma2: f64,
}

impl RootModel {
    pub fn new(
        real_poles: Vec<f64>,
        complex_poles: Vec<ComplexPair>,
        real_zeros: Vec<f64>,
        complex_zeros: Vec<ComplexPair>,
        sigma2: f64,
    ) -> Result<Self> {
        Self::with_tolerances(
            real_poles,
            complex_poles,
            real_zeros,
            complex_zeros,
            sigma2,
            &Tolerances::default(),
        )
    }

    pub fn with_tolerances(
        mut real_poles: Vec<f64>,
        mut complex_poles: Vec<ComplexPair>,
        mut real_zeros: Vec<f64>,
        mut complex_zeros: Vec<ComplexPair>,
        sigma2: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Inadmissible(format!("sigma2 must be positive, got {sigma2}")));
        }
        for &g in real_poles.iter().chain(&real_zeros) {
            if !(g > -1.0 && g < 1.0) {
                return Err(Error::Inadmissible(format!("real root {g} outside (-1, 1)")));
            }
        }
        for p in complex_poles.iter().chain(&complex_zeros) {
            if !(p.magnitude > 0.0 && p.magnitude < 1.0) {
                return Err(Error::Inadmissible(format!("magnitude {} outside (0, 1)", p.magnitude)));
            }
            if !(p.phase > 0.0 && p.phase < PI) {
                return Err(Error::Inadmissible(format!("phase {} outside (0, pi)", p.phase)));
            }
        }
        sort_reals(&mut real_poles);
        sort_reals(&mut real_zeros);
        sort_pairs(&mut complex_poles);
        sort_pairs(&mut complex_zeros);

        let poles = expand_roots(&real_poles, &complex_poles);
        let zeros = expand_roots(&real_zeros, &complex_zeros);
        check_repeats(&poles, tol.repeat, "pole")?;
        check_repeats(&zeros, tol.repeat, "zero")?;
        check_cancellation(&poles, &zeros, tol.cancel)?;

        Ok(Self {
            real_poles,
            complex_poles,
            real_zeros,
            complex_zeros,
            sigma2,
        })
    }

    /// Pure AR model from its poles.
    pub fn ar(real_poles: Vec<f64>, complex_poles: Vec<ComplexPair>, sigma2: f64) -> Result<Self> {
        Self::new(real_poles, complex_poles, Vec::new(), Vec::new(), sigma2)
    }

    pub fn real_poles(&self) -> &[f64] {
        &self.real_poles
    }

    pub fn complex_poles(&self) -> &[ComplexPair] {
        &self.complex_poles
    }

    pub fn real_zeros(&self) -> &[f64] {
        &self.real_zeros
    }

    pub fn complex_zeros(&self) -> &[ComplexPair] {
        &self.complex_zeros
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.real_poles.len() + 2 * self.complex_poles.len()
    }

    pub fn m(&self) -> usize {
        self.real_zeros.len() + 2 * self.complex_zeros.len()
    }

    pub fn config(&self) -> RootConfig {
        RootConfig {
            n: self.n(),
            m: self.m(),
            n1: self.real_poles.len(),
            m1: self.real_zeros.len(),
        }
    }

    /// Flattened pole/zero parameters in the order
    /// `(g_1..g_n1, |g|, φ_g, ..., h_1..h_m1, |h|, φ_h, ...)`; sigma2 excluded.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n() + self.m() + 1);
        theta.extend_from_slice(&self.real_poles);
        for p in &self.complex_poles {
            theta.push(p.magnitude);
            theta.push(p.phase);
        }
        theta.extend_from_slice(&self.real_zeros);
        for p in &self.complex_zeros {
            theta.push(p.magnitude);
            theta.push(p.phase);
        }
        theta
    }

    /// Rebuilds a model of the given configuration from a flat parameter
    /// vector laid out as in [`RootModel::theta`].
    pub fn from_theta(config: RootConfig, theta: &[f64], sigma2: f64) -> Result<Self> {
        Self::from_theta_with(config, theta, sigma2, &Tolerances::default())
    }

    pub fn from_theta_with(config: RootConfig, theta: &[f64], sigma2: f64, tol: &Tolerances) -> Result<Self> {
        if theta.len() != config.dim() {
            return Err(Error::InvalidInput(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                config.dim()
            )));
        }
        let pairs = |s: &[f64]| {
            s.chunks_exact(2)
                .map(|c| ComplexPair::new(c[0], c[1]))
                .collect::<Vec<_>>()
        };
        let (poles, zeros) = theta.split_at(config.n);
        let real_poles = poles[..config.n1].to_vec();
        let complex_poles = pairs(&poles[config.n1..]);
        let real_zeros = zeros[..config.m1].to_vec();
        let complex_zeros = pairs(&zeros[config.m1..]);
        Self::with_tolerances(real_poles, complex_poles, real_zeros, complex_zeros, sigma2, tol)
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        expand_roots(&self.real_poles, &self.complex_poles)
    }

    pub fn zeros(&self) -> Vec<Complex<f64>> {
        expand_roots(&self.real_zeros, &self.complex_zeros)
    }

    pub fn to_coeffs(&self) -> Result<CoeffModel> {
        roots_to_coeffs(self)
    }
}

fn sort_reals(v: &mut [f64]) {
    v.sort_by(|x, y| x.total_cmp(y));
}

fn sort_pairs(v: &mut [ComplexPair]) {
    v.sort_by(|x, y| x.phase.total_cmp(&y.phase).then(x.magnitude.total_cmp(&y.magnitude)));
}

fn expand_roots(reals: &[f64], pairs: &[ComplexPair]) -> Vec<Complex<f64>> {
    let mut roots: Vec<Complex<f64>> = reals.iter().map(|&g| Complex::new(g, 0.0)).collect();
    for p in pairs {
        let z = p.root();
        roots.push(z);
        roots.push(z.conj());
    }
    roots
}

fn check_repeats(roots: &[Complex<f64>], tol: f64, what: &str) -> Result<()> {
    for (i, x) in roots.iter().enumerate() {
        for y in &roots[i + 1..] {
            if (x - y).norm() < tol {
                return Err(Error::Degenerate(format!("repeated {what} near {x}")));
            }
        }
    }
    Ok(())
}

fn check_cancellation(poles: &[Complex<f64>], zeros: &[Complex<f64>], tol: f64) -> Result<()> {
    for p in poles {
        for z in zeros {
            if (p - z).norm() < tol {
                return Err(Error::Degenerate(format!("pole-zero cancellation near {p}")));
            }
        }
    }
    Ok(())
}

/// Expands `Π (1 - r_i q^-1)` into `[c_1, ..., c_k]` (the leading 1 omitted).
/// The roots must be closed under conjugation; imaginary residue is dropped.
pub(crate) fn expand_product(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    poly.into_iter().skip(1).map(|c| c.re).collect()
}

/// Real polynomial product of `1 - g q^-1` factors for real roots and
/// `1 - 2 r cos φ q^-1 + r^2 q^-2` factors for pairs. Exactly real.
fn expand_real_factors(reals: &[f64], pairs: &[ComplexPair]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for &g in reals {
        poly = poly_mul(&poly, &[1.0, -g]);
    }
    for p in pairs {
        poly = poly_mul(&poly, &[1.0, -2.0 * p.magnitude * p.phase.cos(), p.magnitude * p.magnitude]);
    }
    poly.remove(0);
    poly
}

/// Product of two polynomials in `q^-1` given with their constant terms.
pub(crate) fn poly_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            out[i + j] += xi * yj;
        }
    }
    out
}

/// Expands the root form into coefficients.
pub fn roots_to_coeffs(model: &RootModel) -> Result<CoeffModel> {
    let a = expand_real_factors(&model.real_poles, &model.complex_poles);
    let b = expand_real_factors(&model.real_zeros, &model.complex_zeros);
    debug_assert!({
        let c = expand_product(&model.poles());
        c.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-9)
    });
    Ok(CoeffModel {
        a,
        b,
        sigma2: model.sigma2,
    })
}

/// Roots of `z^k + c_1 z^{k-1} + ... + c_k`, i.e. the zeros of
/// `1 + c_1 q^-1 + ... + c_k q^-k` in `q`. Companion-matrix eigenvalues
/// followed by one Newton step per root.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let k = coeffs.len();
    match k {
        0 => return Vec::new(),
        1 => return vec![Complex::new(-coeffs[0], 0.0)],
        _ => {}
    }
    let mut companion = DMatrix::<f64>::zeros(k, k);
    for (j, &c) in coeffs.iter().enumerate() {
        companion[(0, j)] = -c;
    }
    for i in 1..k {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&z| newton_polish(coeffs, z))
        .collect()
}

fn eval_monic(coeffs: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    // Horner for p and p'.
    let mut p = Complex::new(1.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn newton_polish(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    let (p, dp) = eval_monic(coeffs, z);
    if dp.norm() == 0.0 || !dp.norm().is_finite() {
        return z;
    }
    let next = z - p / dp;
    let (p_next, _) = eval_monic(coeffs, next);
    if p_next.norm() <= p.norm() {
        next
    } else {
        z
    }
}

/// Relative backward error of a root: `|p(z)| / Σ |c_i| |z|^{k-i}`.
pub fn root_backward_error(coeffs: &[f64], z: Complex<f64>) -> f64 {
    let (p, _) = eval_monic(coeffs, z);
    let r = z.norm();
    let mut scale = 0.0;
    let mut pow = 1.0;
    for &c in coeffs.iter().rev() {
        scale += c.abs() * pow;
        pow *= r;
    }
    scale += pow;
    p.norm() / scale
}

fn max_root_modulus(coeffs: &[f64]) -> f64 {
    polynomial_roots(coeffs).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Splits roots into sorted real roots and canonical conjugate pairs.
fn classify_roots(roots: &[Complex<f64>], what: &str) -> Result<(Vec<f64>, Vec<ComplexPair>)> {
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = 0usize;
    for z in roots {
        let thresh = IMAG_ZERO * z.norm().max(1.0);
        if z.im.abs() <= thresh {
            reals.push(z.re);
        } else if z.im > 0.0 {
            upper.push(ComplexPair::new(z.norm(), z.arg()));
        } else {
            lower += 1;
        }
    }
    if lower != upper.len() {
        return Err(Error::Degenerate(format!("unpaired complex {what}s")));
    }
    sort_reals(&mut reals);
    sort_pairs(&mut upper);
    Ok((reals, upper))
}

/// Root form of a coefficient model.
pub fn coeffs_to_roots(model: &CoeffModel) -> Result<RootModel> {
    coeffs_to_roots_with(model, &Tolerances::default())
}

pub fn coeffs_to_roots_with(model: &CoeffModel, tol: &Tolerances) -> Result<RootModel> {
    let poles = polynomial_roots(&model.a);
    let zeros = polynomial_roots(&model.b);
    check_repeats(&poles, tol.repeat, "pole")?;
    check_repeats(&zeros, tol.repeat, "zero")?;
    let (real_poles, complex_poles) = classify_roots(&poles, "pole")?;
    let (real_zeros, complex_zeros) = classify_roots(&zeros, "zero")?;
    RootModel::with_tolerances(real_poles, complex_poles, real_zeros, complex_zeros, model.sigma2, tol)
}

/// A finite-valued time series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    burn_in: usize,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_burn_in(values, 0)
    }

    /// A series whose first `burn_in` generated samples were discarded.
    pub fn with_burn_in(values: Vec<f64>, burn_in: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Self { values, burn_in })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of leading samples dropped when this series was generated.
    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// The first `len` samples.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            values: self.values[..len.min(self.values.len())].to_vec(),
            burn_in: self.burn_in,
        }
    }

    /// Parses one value per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line {}: cannot parse {line:?}", lineno + 1)))?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        for v in &self.values {
            out.push_str(&format!("{v:e}\n"));
        }
        out
    }
}

/// Simulates `total_len` samples of the ARMA recursion with zero initial
/// conditions and returns the samples after the first `burn_in`.
pub fn simulate(model: &CoeffModel, total_len: usize, burn_in: usize, seed: u64) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(model, total_len, burn_in, &mut rng).map(|(series, _)| series)
}

/// Like [`simulate`] with a caller-provided generator; also returns the
/// innovations aligned with the returned samples.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    model: &CoeffModel,
    total_len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<(TimeSeries, Vec<f64>)> {
    if total_len <= burn_in {
        return Err(Error::InvalidInput(format!(
            "total length {total_len} must exceed burn-in {burn_in}"
        )));
    }
    let normal = Normal::new(0.0, model.sigma2.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let e: Vec<f64> = (0..total_len).map(|_| normal.sample(rng)).collect();
    let y = arma_filter(&model.a, &model.b, &e);
    Ok((
        TimeSeries::with_burn_in(y[burn_in..].to_vec(), burn_in)?,
        e[burn_in..].to_vec(),
    ))
}

/// `y_t = -Σ a_i y_{t-i} + e_t + Σ b_j e_{t-j}` with zero pre-sample values.
pub fn arma_filter(a: &[f64], b: &[f64], e: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; e.len()];
    for t in 0..e.len() {
        let mut acc = e[t];
        for (j, &bj) in b.iter().enumerate() {
            if t > j {
                acc += bj * e[t - j - 1];
            }
        }
        for (i, &ai) in a.iter().enumerate() {
            if t > i {
                acc -= ai * y[t - i - 1];
            }
        }
        y[t] = acc;
    }
    y
}

/// One-step prediction errors and their mean square.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrors {
    pub residuals: Vec<f64>,
    pub sigma2_hat: f64,
}

/// Prediction errors `e_t = y_t - ŷ_{t|t-1}` of the zero-initial-condition
/// predictor `ŷ_{t+1|t} = Σ b_i e_{t-i+1} - Σ a_i y_{t-i+1}`.
pub fn prediction_errors(series: &TimeSeries, model: &CoeffModel) -> Result<PredictionErrors> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let residuals = residuals(series.values(), &model.a, &model.b);
    let sigma2_hat = mean_square(&residuals);
    Ok(PredictionErrors {
        residuals,
        sigma2_hat,
    })
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `e_t = y_t + Σ a_i y_{t-i} - Σ b_j e_{t-j}`, zero pre-sample values.
pub(crate) fn residuals(y: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; y.len()];
    for t in 0..y.len() {
        let mut acc = y[t];
        for (i, &ai) in a.iter().enumerate() {
            if t > i {
                acc += ai * y[t - i - 1];
            }
        }
        for (j, &bj) in b.iter().enumerate() {
            if t > j {
                acc -= bj * e[t - j - 1];
            }
        }
        e[t] = acc;
    }
    e
}

/// Residuals together with their sensitivities to `(a, b)`.
///
/// Column `i < n` holds `∂e_t/∂a_i`, column `n + j` holds `∂e_t/∂b_j`; both
/// are obtained by filtering through `1/B(q)`.
pub(crate) fn residuals_with_sensitivities(y: &[f64], a: &[f64], b: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.len();
    let m = b.len();
    let big_n = y.len();
    let e = residuals(y, a, b);
    let mut sens = DMatrix::<f64>::zeros(big_n, n + m);
    for t in 0..big_n {
        for col in 0..n + m {
            let mut acc = if col < n {
                let lag = col + 1;
                if t >= lag {
                    y[t - lag]
                } else {
                    0.0
                }
            } else {
                let lag = col - n + 1;
                if t >= lag {
                    -e[t - lag]
                } else {
                    0.0
                }
            };
            for (j, &bj) in b.iter().enumerate() {
                if t > j {
                    acc -= bj * sens[(t - j - 1, col)];
                }
            }
            sens[(t, col)] = acc;
        }
    }
    (e, sens)
}

/// Gaussian log-likelihood of the series under the model.
pub fn log_likelihood(series: &TimeSeries, model: &CoeffModel) -> Result<f64> {
    let pe = prediction_errors(series, model)?;
    let n = series.len() as f64;
    let sse = pe.sigma2_hat * n;
    Ok(-0.5 * n * (2.0 * PI * model.sigma2).ln() - sse / (2.0 * model.sigma2))
}

/// Log-likelihood maximized over sigma2: `-(N/2) ln(2πe σ̂²)`.
pub fn max_log_likelihood(sigma2_hat: f64, len: usize) -> f64 {
    -0.5 * len as f64 * (2.0 * PI * std::f64::consts::E * sigma2_hat).ln()
}

/// Gradient of [`log_likelihood`] with respect to `(a_1..a_n, b_1..b_m)`.
pub fn log_likelihood_gradient(series: &TimeSeries, model: &CoeffModel) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let (e, sens) = residuals_with_sensitivities(series.values(), &model.a, &model.b);
    let scale = -1.0 / model.sigma2;
    Ok((0..sens.ncols())
        .map(|c| scale * e.iter().enumerate().map(|(t, et)| et * sens[(t, c)]).sum::<f64>())
        .collect())
}

/// On-disk model description: coefficient form or root form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Coeffs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(default = "unit_variance")]
        sigma2: f64,
    },
    Roots {
        #[serde(default)]
        real_poles: Vec<f64>,
        #[serde(default)]
        complex_poles: Vec<[f64; 2]>,
        #[serde(default)]
        real_zeros: Vec<f64>,
        #[serde(default)]
        complex_zeros: Vec<[f64; 2]>,
        #[serde(default = "unit_variance")]
        sigma2: f64,
    },
}

fn unit_variance() -> f64 {
    1.0
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        const KEYS: [&str; 10] = [
            "n", "m", "a", "b", "sigma2", "real_poles", "complex_poles", "real_zeros", "complex_zeros", "comment",
        ];
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidInput("model file must hold a JSON object".into()))?;
        if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidInput(format!("unknown model field '{k}'")));
        }
        let coeff_form = ["n", "m", "a", "b"].iter().any(|k| obj.contains_key(*k));
        let root_form = KEYS[5..9].iter().any(|k| obj.contains_key(*k));
        if coeff_form && root_form {
            return Err(Error::InvalidInput("model mixes coefficient and root fields".into()));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_root_model(&self) -> Result<RootModel> {
        match self {
            Self::Coeffs { .. } => self.to_coeff_model()?.to_roots(),
            Self::Roots {
                real_poles,
                complex_poles,
                real_zeros,
                complex_zeros,
                sigma2,
            } => {
                let pairs = |v: &[[f64; 2]]| v.iter().map(|p| ComplexPair::new(p[0], p[1])).collect();
                RootModel::new(
                    real_poles.clone(),
                    pairs(complex_poles),
                    real_zeros.clone(),
                    pairs(complex_zeros),
                    *sigma2,
                )
            }
        }
    }

    pub fn to_coeff_model(&self) -> Result<CoeffModel> {
        match self {
            Self::Coeffs { n, m, a, b, sigma2 } => {
                if n.is_some_and(|n| n != a.len()) || m.is_some_and(|m| m != b.len()) {
                    let (n, m) = (n.unwrap_or(a.len()), m.unwrap_or(b.len()));
                    return Err(Error::InvalidInput(format!(
                        "declared n={n}, m={m} but got {} and {} coefficients",
                        a.len(),
                        b.len()
                    )));
                }
                CoeffModel::new(a.clone(), b.clone(), *sigma2)
            }
            Self::Roots { .. } => self.to_root_model()?.to_coeffs(),
        }
    }

    pub fn from_coeffs(model: &CoeffModel) -> Self {
        Self::Coeffs {
            n: Some(model.n()),
            m: Some(model.m()),
            a: model.a.clone(),
            b: model.b.clone(),
            sigma2: model.sigma2,
        }
    }

    pub fn from_roots(model: &RootModel) -> Self {
        let pairs = |v: &[ComplexPair]| v.iter().map(|p| [p.magnitude, p.phase]).collect();
        Self::Roots {
            real_poles: model.real_poles.clone(),
            complex_poles: pairs(&model.complex_poles),
            real_zeros: model.real_zeros.clone(),
            complex_zeros: pairs(&model.complex_zeros),
            sigma2: model.sigma2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol
    }

    #[test]
    fn vieta_single_real_pole() {
        let m = RootModel::ar(vec![0.5], vec![], 1.0).unwrap();
        assert_eq!(roots_to_coeffs(&m).unwrap().a(), &[-0.5]);
    }

    #[test]
    fn vieta_complex_pair() {
        let m = RootModel::ar(vec![], vec![ComplexPair::new(0.9, PI / 2.0)], 1.0).unwrap();
        let c = roots_to_coeffs(&m).unwrap();
        assert!(close(c.a()[0], 0.0, 1e-15));
        assert!(close(c.a()[1], 0.81, 1e-15));
    }

    #[test]
    fn roots_of_first_example3_model() {
        let c = CoeffModel::new(vec![-0.5], vec![0.8], 1.0).unwrap();
        let r = c.to_roots().unwrap();
        assert!(close(r.real_poles()[0], 0.5, 1e-14));
        assert!(close(r.real_zeros()[0], -0.8, 1e-14));
    }

    #[test]
    fn roots_of_pure_complex_pair() {
        let r = CoeffModel::new(vec![0.0, 0.81], vec![], 1.0).unwrap().to_roots().unwrap();
        assert!(r.real_poles().is_empty());
        let p = r.complex_poles()[0];
        assert!(close(p.magnitude, 0.9, 1e-12));
        assert!(close(p.phase, PI / 2.0, 1e-12));
    }

    #[test]
    fn roots_of_second_example3_model() {
        // Quadratic formula: z^2 + 0.64 z + 0.7 has roots (-0.64 ± i sqrt(4*0.7 - 0.64^2)) / 2.
        let c = CoeffModel::new(vec![0.64, 0.7], vec![0.8], 1.0).unwrap();
        let r = c.to_roots().unwrap();
        let p = r.complex_poles()[0];
        let re = -0.32;
        let im = (4.0 * 0.7 - 0.64f64 * 0.64).sqrt() / 2.0;
        assert!(close(p.magnitude, 0.7f64.sqrt(), 1e-12));
        assert!(close(p.phase, im.atan2(re), 1e-12));
        assert!(close(-2.0 * p.magnitude * p.phase.cos(), 0.64, 1e-12));
        let back = r.to_coeffs().unwrap();
        assert!(close(back.a()[0], 0.64, 1e-10) && close(back.a()[1], 0.7, 1e-10));
        assert!(close(back.b()[0], 0.8, 1e-10));
    }

    #[test]
    fn backward_error_is_small() {
        let a = [0.2, -0.31, 0.05, 0.11];
        for z in polynomial_roots(&a) {
            assert!(root_backward_error(&a, z) < 1e-8);
        }
    }

    #[test]
    fn rejects_unstable_and_cancelling_models() {
        assert!(matches!(CoeffModel::new(vec![-1.2], vec![], 1.0), Err(Error::Inadmissible(_))));
        assert!(matches!(CoeffModel::new(vec![], vec![1.0], 1.0), Err(Error::Inadmissible(_))));
        assert!(matches!(CoeffModel::new(vec![-0.5], vec![-0.5], 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(CoeffModel::new(vec![0.1], vec![], 0.0), Err(Error::Inadmissible(_))));
        // (1 - 0.5 q^-1)^2
        let c = CoeffModel::new(vec![-1.0, 0.25], vec![], 1.0).unwrap();
        assert!(matches!(c.to_roots(), Err(Error::Degenerate(_))));
        assert!(RootModel::ar(vec![0.3, 0.3], vec![], 1.0).is_err());
        assert!(RootModel::ar(vec![], vec![ComplexPair::new(1.0, 1.0)], 1.0).is_err());
        assert!(RootModel::ar(vec![], vec![ComplexPair::new(0.5, PI)], 1.0).is_err());
    }

    #[test]
    fn index_sets_follow_layout() {
        let cfg = RootConfig::new(3, 4, 1, 2).unwrap();
        let s = cfg.index_sets();
        assert_eq!(s.pole_real, vec![0]);
        assert_eq!(s.pole_magnitude, vec![1]);
        assert_eq!(s.pole_phase, vec![2]);
        assert_eq!(s.zero_real, vec![3, 4]);
        assert_eq!(s.zero_magnitude, vec![5]);
        assert_eq!(s.zero_phase, vec![6]);
        assert_eq!(cfg.param_kinds()[7], ParamKind::NoiseVariance);
        assert!(RootConfig::new(3, 0, 0, 0).is_err());
    }

    #[test]
    fn white_noise_simulation_is_raw_innovations() {
        let wn = CoeffModel::white_noise(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, e) = simulate_with_rng(&wn, 50, 0, &mut rng).unwrap();
        assert_eq!(y.values(), &e[..]);
        assert_eq!(simulate(&wn, 50, 0, 3).unwrap(), y);
    }

    #[test]
    fn ar1_sample_autocorrelation() {
        // Theoretical lag-1 autocorrelation of AR(1) with pole 0.5 is 0.5.
        let model = CoeffModel::new(vec![-0.5], vec![], 1.0).unwrap();
        let y = simulate(&model, 100_100, 100, 11).unwrap();
        let v = y.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let c0: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
        let c1: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!(close(c1 / c0, 0.5, 0.02), "{}", c1 / c0);
    }

    #[test]
    fn arma11_sample_variance() {
        // Var of (1 + a q^-1) y = (1 + b q^-1) e is (1 + b^2 - 2ab) / (1 - a^2).
        let (a, b) = (0.3, 0.5);
        let model = CoeffModel::new(vec![a], vec![b], 1.0).unwrap();
        let y = simulate(&model, 200_100, 100, 5).unwrap();
        let v = y.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let theory = (1.0 + b * b - 2.0 * a * b) / (1.0 - a * a);
        assert!((var / theory - 1.0).abs() < 0.03, "{var} vs {theory}");
    }

    #[test]
    fn ma1_residuals_hand_unrolled() {
        let model = CoeffModel::new(vec![], vec![0.8], 1.0).unwrap();
        let mut y = vec![0.0; 5];
        y[0] = 1.0;
        let pe = prediction_errors(&TimeSeries::new(y).unwrap(), &model).unwrap();
        let expected = [1.0, -0.8, 0.64, -0.512, 0.4096];
        for (r, e) in pe.residuals.iter().zip(expected) {
            assert!(close(*r, e, 1e-15));
        }
    }

    #[test]
    fn residuals_recover_innovations() {
        let model = CoeffModel::new(vec![0.64, 0.7], vec![0.8], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, e) = simulate_with_rng(&model, 10_000, 0, &mut rng).unwrap();
        let pe = prediction_errors(&y, &model).unwrap();
        // Zero initial conditions on both sides: the recursion inverts exactly.
        let max_diff = pe.residuals.iter().zip(&e).map(|(r, e)| (r - e).abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-9);
    }

    #[test]
    fn log_likelihood_identities() {
        let wn = CoeffModel::white_noise(1.0).unwrap();
        let ll = log_likelihood(&TimeSeries::new(vec![0.0]).unwrap(), &wn).unwrap();
        assert!(close(ll, -0.5 * (2.0 * PI).ln(), 1e-15));

        let y = simulate(&CoeffModel::new(vec![-0.4], vec![0.3], 1.0).unwrap(), 300, 100, 4).unwrap();
        let model = CoeffModel::new(vec![-0.35], vec![0.25], 1.0).unwrap();
        let s2 = prediction_errors(&y, &model).unwrap().sigma2_hat;
        let plugged = log_likelihood(&y, &model.with_sigma2(s2).unwrap()).unwrap();
        assert!(close(plugged, max_log_likelihood(s2, y.len()), 1e-9));
    }

    #[test]
    fn model_file_forms() {
        let c = ModelFile::parse(r#"{"n":1,"m":1,"a":[-0.5],"b":[0.8],"sigma2":1.0}"#).unwrap();
        assert_eq!(c.to_coeff_model().unwrap().a(), &[-0.5]);
        let r = ModelFile::parse(r#"{"real_poles":[0.5],"complex_poles":[[0.9,1.0]],"sigma2":2.0}"#).unwrap();
        let rm = r.to_root_model().unwrap();
        assert_eq!(rm.n(), 3);
        assert_eq!(rm.sigma2(), 2.0);
        let bad = ModelFile::parse(r#"{"n":2,"m":0,"a":[0.1],"b":[],"sigma2":1.0}"#).unwrap();
        assert!(bad.to_coeff_model().is_err());
    }

    #[test]
    fn series_text_round_trip() {
        let s = TimeSeries::from_text("# header\n1.5\n\n-2\n3e-3\n").unwrap();
        assert_eq!(s.values(), &[1.5, -2.0, 3e-3]);
        assert_eq!(TimeSeries::from_text(&s.to_text()).unwrap(), s);
        assert!(TimeSeries::from_text("1\nabc\n").is_err());
        assert!(TimeSeries::new(vec![f64::NAN]).is_err());
    }
}
