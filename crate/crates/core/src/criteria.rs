//! Code lengths and information criteria for candidate structures, and the
//! argmin selection rule. All code lengths are in nats.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::estimators::{default_pls_start, fit_ar_ladder, fit_arma, pls_errors, RegressionFit};
use crate::model::{RootConfig, TimeSeries};
use crate::qmc::IntegralTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Nml,
    Bic,
    Kicc,
    Kic,
    Pls,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Nml => "nml",
            Criterion::Bic => "bic",
            Criterion::Kicc => "kicc",
            Criterion::Kic => "kic",
            Criterion::Pls => "pls",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nml" => Ok(Criterion::Nml),
            "bic" => Ok(Criterion::Bic),
            "kicc" => Ok(Criterion::Kicc),
            "kic" => Ok(Criterion::Kic),
            "pls" => Ok(Criterion::Pls),
            other => Err(Error::InvalidInput(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Candidate structure. For polynomial regression `n` holds the number of
/// regressors `k` and `m` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Structure {
    pub n: usize,
    pub m: usize,
}

impl Structure {
    pub fn ar(n: usize) -> Self {
        Self { n, m: 0 }
    }

    pub fn arma(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    /// Number of model coefficients, `n + m`.
    pub fn order(&self) -> usize {
        self.n + self.m
    }

    /// True when every lag of `other` is also in `self` and they differ.
    pub fn strictly_contains(&self, other: &Structure) -> bool {
        self.n >= other.n && self.m >= other.m && self != other
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m == 0 {
            write!(f, "AR({})", self.n)
        } else {
            write!(f, "ARMA({},{})", self.n, self.m)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreStatus {
    Finite,
    /// Zero residual error; the total is `-∞` and the candidate wins.
    PerfectFit,
    /// The criterion is not defined for this candidate.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub criterion: Criterion,
    pub structure: Structure,
    pub fit_term: f64,
    pub param_term: f64,
    pub integral_term: f64,
    pub total: f64,
    pub status: ScoreStatus,
}

impl CriterionScore {
    fn new(criterion: Criterion, structure: Structure, fit_term: f64, param_term: f64, integral_term: f64) -> Self {
        let status = if fit_term == f64::NEG_INFINITY {
            ScoreStatus::PerfectFit
        } else if (fit_term + param_term + integral_term).is_finite() {
            ScoreStatus::Finite
        } else {
            ScoreStatus::Undefined
        };
        Self {
            criterion,
            structure,
            fit_term,
            param_term,
            integral_term,
            total: fit_term + param_term + integral_term,
            status,
        }
    }

    fn undefined(criterion: Criterion, structure: Structure) -> Self {
        Self {
            criterion,
            structure,
            fit_term: f64::NAN,
            param_term: f64::NAN,
            integral_term: f64::NAN,
            total: f64::NAN,
            status: ScoreStatus::Undefined,
        }
    }

    /// Adds the structure code length `ln k + 2 ln ln k` (zero for small `k`
    /// where it would be negative) to the parameter term, with `k = n + m + 1`.
    pub fn with_structure_cost(mut self) -> Self {
        let cost = structure_code_length(self.structure.order() + 1);
        self.param_term += cost;
        self.total += cost;
        self
    }

    pub const CSV_HEADER: &'static str = "criterion,n,m,fit_term,param_term,integral_term,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.criterion, self.structure.n, self.structure.m, self.fit_term, self.param_term, self.integral_term, self.total
        )
    }
}

/// `ln k + 2 ln ln k`, clipped at zero.
pub fn structure_code_length(k: usize) -> f64 {
    let k = k as f64;
    if k < 2.0 {
        return 0.0;
    }
    (k.ln() + 2.0 * k.ln().ln()).max(0.0)
}

fn ln_or_perfect(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// Forms of the regression criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmlRegressionForm {
    /// `(N-k) ln τ̂ + k ln R̂ + (N-k-1) ln(1/(N-k)) - (k-1) ln k`.
    #[default]
    Printed,
    /// The printed form with the two data-dependent terms halved:
    /// `((N-k)/2) ln τ̂ + (k/2) ln R̂ + (N-k-1) ln(1/(N-k)) - (k-1) ln k`.
    HalvedFit,
    /// `(N-k) ln τ̂ + k ln R̂ - 2 ln Γ((N-k)/2) - 2 ln Γ(k/2)`, of which the
    /// printed form is the Stirling approximation up to a constant.
    Gamma,
}

impl FromStr for NmlRegressionForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(Self::Printed),
            "halved-fit" => Ok(Self::HalvedFit),
            "gamma" => Ok(Self::Gamma),
            other => Err(Error::InvalidInput(format!("unknown regression form '{other}'"))),
        }
    }
}

/// Stochastic complexity of a linear regression fit.
pub fn nml_regression(fit: &RegressionFit, form: NmlRegressionForm) -> CriterionScore {
    let n = fit.len as f64;
    let k = fit.k() as f64;
    let s = Structure::ar(fit.k());
    if fit.len <= fit.k() + 1 || fit.r_hat <= 0.0 || !fit.r_hat.is_finite() {
        return CriterionScore::undefined(Criterion::Nml, s);
    }
    let ln_tau = ln_or_perfect(fit.tau_hat);
    let ln_r = fit.r_hat.ln();
    let (fit_term, param_term) = match form {
        NmlRegressionForm::Printed => (
            (n - k) * ln_tau,
            k * ln_r - (n - k - 1.0) * (n - k).ln() - (k - 1.0) * k.ln(),
        ),
        NmlRegressionForm::HalvedFit => (
            0.5 * (n - k) * ln_tau,
            0.5 * k * ln_r - (n - k - 1.0) * (n - k).ln() - (k - 1.0) * k.ln(),
        ),
        NmlRegressionForm::Gamma => (
            (n - k) * ln_tau,
            k * ln_r - 2.0 * ln_gamma((n - k) / 2.0) - 2.0 * ln_gamma(k / 2.0),
        ),
    };
    CriterionScore::new(Criterion::Nml, s, fit_term, param_term, 0.0)
}

/// How the Fisher-information integral of a structure is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralMode {
    /// One root-type configuration per structure: all roots complex for an
    /// even count, exactly one real root for an odd count.
    #[default]
    DefaultConfig,
    /// Sum over every root-type configuration of the structure.
    AllConfigs,
}

/// `ln ∫ |J(θ)|^{1/2} dθ` for ARMA(n, m). AR(1) uses the exact value `ln π`.
pub fn ln_integral(table: &IntegralTable, n: usize, m: usize, mode: IntegralMode) -> Result<f64> {
    if n + m == 0 {
        return Ok(0.0);
    }
    match mode {
        IntegralMode::DefaultConfig => {
            if n + m == 1 {
                return Ok(PI.ln());
            }
            Ok(table.require(RootConfig::default_for(n, m))?.ln_integral)
        }
        IntegralMode::AllConfigs => {
            let logs = RootConfig::all_for(n, m)
                .into_iter()
                .map(|c| table.require(c).map(|l| l.ln_integral))
                .collect::<Result<Vec<f64>>>()?;
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
        }
    }
}

/// `(N/2) ln(2πe σ̂²) + ((n+m+1)/2) ln(N/2π) + ln ∫ |J|^{1/2}`.
pub fn nml_arma(sigma2_hat: f64, len: usize, n: usize, m: usize, table: &IntegralTable, mode: IntegralMode) -> Result<CriterionScore> {
    let integral = ln_integral(table, n, m, mode)?;
    let big_n = len as f64;
    let k = (n + m + 1) as f64;
    let fit_term = if sigma2_hat == 0.0 {
        f64::NEG_INFINITY
    } else {
        0.5 * big_n * (2.0 * PI * E * sigma2_hat).ln()
    };
    let param_term = 0.5 * k * (big_n / (2.0 * PI)).ln();
    Ok(CriterionScore::new(Criterion::Nml, Structure::arma(n, m), fit_term, param_term, integral))
}

/// [`nml_arma`] for a pure AR(n) model with the default configuration.
pub fn nml_ar(sigma2_hat: f64, len: usize, n: usize, table: &IntegralTable) -> Result<CriterionScore> {
    nml_arma(sigma2_hat, len, n, 0, table, IntegralMode::DefaultConfig)
}

/// `(N/2) ln σ̂² + (k/2) ln N`, with `k = n + m + 1` counting the noise
/// variance. Constant terms of `-2 ln L` are dropped.
pub fn bic(sigma2_hat: f64, len: usize, structure: Structure) -> CriterionScore {
    let big_n = len as f64;
    let k = (structure.order() + 1) as f64;
    CriterionScore::new(
        Criterion::Bic,
        structure,
        0.5 * big_n * ln_or_perfect(sigma2_hat),
        0.5 * k * big_n.ln(),
        0.0,
    )
}

/// Bias-corrected Kullback information criterion for a Gaussian linear
/// model with `p = n + m` regression coefficients:
/// `N ln σ̂² + 2(p+1)N/(N-p-2) - N ψ((N-p)/2) + N ln(N/2)`.
/// Undefined when `N - p - 2 ≤ 0`.
pub fn kicc(sigma2_hat: f64, len: usize, structure: Structure) -> CriterionScore {
    let big_n = len as f64;
    let p = structure.order() as f64;
    if big_n - p - 2.0 <= 0.0 {
        return CriterionScore::undefined(Criterion::Kicc, structure);
    }
    let param = 2.0 * (p + 1.0) * big_n / (big_n - p - 2.0) - big_n * digamma((big_n - p) / 2.0) + big_n * (big_n / 2.0).ln();
    CriterionScore::new(Criterion::Kicc, structure, big_n * ln_or_perfect(sigma2_hat), param, 0.0)
}

/// Plain KIC: `-2 ln L̂ + 3(p+1)` with `-2 ln L̂ = N ln(2πe σ̂²)`.
pub fn kic(sigma2_hat: f64, len: usize, structure: Structure) -> CriterionScore {
    let big_n = len as f64;
    let fit_term = if sigma2_hat == 0.0 {
        f64::NEG_INFINITY
    } else {
        big_n * (2.0 * PI * E * sigma2_hat).ln()
    };
    CriterionScore::new(Criterion::Kic, structure, fit_term, 3.0 * (structure.order() + 1) as f64, 0.0)
}

/// PLS scores for AR orders `1..=totals.len()`.
pub fn pls(totals: &[f64]) -> Vec<CriterionScore> {
    totals
        .iter()
        .enumerate()
        .map(|(i, &t)| CriterionScore::new(Criterion::Pls, Structure::ar(i + 1), t, 0.0, 0.0))
        .collect()
}

/// Outcome of [`select`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub structure: Structure,
    pub score: CriterionScore,
    /// Candidates skipped because their score was undefined.
    pub excluded: Vec<Structure>,
}

/// Argmin of the totals. Ties go to the smaller `n + m`, then the smaller
/// `n`; undefined candidates are excluded.
pub fn select(scores: &[CriterionScore]) -> Result<Selection> {
    let mut excluded = Vec::new();
    let mut best: Option<&CriterionScore> = None;
    for s in scores {
        if s.status == ScoreStatus::Undefined {
            excluded.push(s.structure);
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                s.total < b.total
                    || (s.total == b.total
                        && (s.structure.order(), s.structure.n) < (b.structure.order(), b.structure.n))
            }
        };
        if better {
            best = Some(s);
        }
    }
    let score = *best.ok_or_else(|| Error::InvalidInput("no candidate with a defined score".into()))?;
    Ok(Selection {
        structure: score.structure,
        score,
        excluded,
    })
}

/// Candidate scores on one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScores {
    pub scores: Vec<CriterionScore>,
    /// ARMA candidates whose fit failed, with the reason.
    pub unfitted: Vec<(Structure, String)>,
}

/// Scores AR(1..=max_order), or with `arma` every ARMA(n, m) with
/// `n, m ≥ 1` and `n + m ≤ max_order`, under one criterion. PLS is AR only.
pub fn score_series(
    series: &TimeSeries,
    max_order: usize,
    criterion: Criterion,
    arma: bool,
    table: &IntegralTable,
    mode: IntegralMode,
) -> Result<SeriesScores> {
    if max_order == 0 || (arma && max_order < 2) {
        return Err(Error::InvalidInput(format!("maximum order {max_order} leaves no candidates")));
    }
    if arma && criterion == Criterion::Pls {
        return Err(Error::InvalidInput("PLS is only available for AR candidates".into()));
    }
    if criterion == Criterion::Pls {
        let errors = pls_errors(series, max_order, default_pls_start(max_order))?;
        return Ok(SeriesScores {
            scores: pls(&errors.totals()),
            unfitted: Vec::new(),
        });
    }
    let mut fits = Vec::new();
    let mut unfitted = Vec::new();
    if arma {
        for n in 1..max_order {
            for m in 1..=max_order - n {
                match fit_arma(series, n, m) {
                    Ok(f) => fits.push((Structure::arma(n, m), f.sigma2_hat)),
                    Err(e) => unfitted.push((Structure::arma(n, m), e.to_string())),
                }
            }
        }
    } else {
        let ladder = fit_ar_ladder(series, max_order)?;
        fits.extend(ladder.orders.iter().enumerate().map(|(i, o)| (Structure::ar(i + 1), o.sigma2_hat)));
    }
    let len = series.len();
    let scores = fits
        .iter()
        .map(|&(s, s2)| {
            Ok(match criterion {
                Criterion::Nml => nml_arma(s2, len, s.n, s.m, table, mode)?,
                Criterion::Bic => bic(s2, len, s),
                Criterion::Kicc => kicc(s2, len, s),
                _ => kic(s2, len, s),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SeriesScores { scores, unfitted })
}
