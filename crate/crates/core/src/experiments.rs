//! Simulation studies: polynomial regression (example 1), AR order
//! estimation (example 2) and ARMA structure estimation (example 3).
//!
//! Every run draws from its own generator, seeded by mixing the master seed
//! with the run coordinates, so reports do not depend on scheduling.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion, CriterionScore, IntegralMode, NmlRegressionForm, Structure};
use crate::error::{Error, Result};
use crate::estimators::{default_pls_start, fit_ar_ladder, fit_arma, fit_regression, pls_errors, polynomial_design};
use crate::model::{simulate, CoeffModel, ComplexPair, RootModel, TimeSeries};
use crate::qmc::IntegralTable;

/// Largest AR order scored in example 2.
pub const AR_MAX_ORDER: usize = 6;
/// Largest polynomial degree fitted in example 1.
pub const MAX_DEGREE: usize = 10;
/// Degree of the generating polynomial in example 1.
pub const TRUE_DEGREE: usize = 3;
/// Samples discarded at the start of every simulated series.
pub const BURN_IN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub example: u8,
    pub sample_sizes: Vec<usize>,
    pub runs_outer: usize,
    pub runs_inner: usize,
    pub criteria: Vec<Criterion>,
    pub seed: u64,
    /// Example 2: true AR orders. Example 3: generating models (1-based).
    /// Unused by example 1.
    pub cases: Vec<usize>,
    /// Example 1 only; `None` gives noiseless data.
    pub snr_db: Option<f64>,
    pub nml_form: NmlRegressionForm,
    pub integral_mode: IntegralMode,
}

impl ExperimentConfig {
    /// Desk-scale defaults for an example.
    pub fn for_example(example: u8) -> Result<Self> {
        let base = Self {
            example,
            sample_sizes: Vec::new(),
            runs_outer: 1,
            runs_inner: 1,
            criteria: Vec::new(),
            seed: 1,
            cases: Vec::new(),
            snr_db: None,
            nml_form: NmlRegressionForm::default(),
            integral_mode: IntegralMode::default(),
        };
        match example {
            1 => Ok(Self {
                sample_sizes: vec![25, 30, 40, 50, 60, 70, 80, 90, 100],
                runs_outer: 1000,
                criteria: vec![Criterion::Nml, Criterion::Bic, Criterion::Kicc],
                snr_db: Some(10.0),
                ..base
            }),
            2 => Ok(Self {
                sample_sizes: vec![25, 50, 100, 200],
                runs_outer: 30,
                runs_inner: 30,
                criteria: vec![Criterion::Nml, Criterion::Bic, Criterion::Kicc, Criterion::Pls],
                cases: vec![1, 2, 3],
                ..base
            }),
            3 => Ok(Self {
                sample_sizes: vec![25, 50, 100, 200, 400],
                runs_outer: 100,
                criteria: vec![Criterion::Nml, Criterion::Bic, Criterion::Kicc],
                cases: vec![1, 2, 3],
                ..base
            }),
            other => Err(Error::Config(format!("unknown example {other}; expected 1, 2 or 3"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs_outer == 0 || self.runs_inner == 0 {
            return Err(Error::Config("run counts must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::Config("no criteria selected".into()));
        }
        let allowed: &[Criterion] = match self.example {
            1 | 3 => &[Criterion::Nml, Criterion::Bic, Criterion::Kicc, Criterion::Kic],
            2 => &[Criterion::Nml, Criterion::Bic, Criterion::Kicc, Criterion::Kic, Criterion::Pls],
            other => return Err(Error::Config(format!("unknown example {other}"))),
        };
        if let Some(c) = self.criteria.iter().find(|c| !allowed.contains(c)) {
            return Err(Error::Config(format!("criterion {c} is not available in example {}", self.example)));
        }
        match self.example {
            1 => {
                if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < MAX_DEGREE + 3) {
                    return Err(Error::Config(format!("sample size {n} too small for degree {MAX_DEGREE}")));
                }
            }
            2 => {
                if self.cases.is_empty() || self.cases.iter().any(|&n| n == 0 || n > AR_MAX_ORDER) {
                    return Err(Error::Config(format!("true AR orders must lie in 1..={AR_MAX_ORDER}")));
                }
                let min = default_pls_start(AR_MAX_ORDER);
                if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < min) {
                    return Err(Error::Config(format!("sample size {n} below the PLS start {min}")));
                }
            }
            _ => {
                if self.cases.is_empty() || self.cases.iter().any(|&c| c == 0 || c > example3_models().len()) {
                    return Err(Error::Config("example 3 models are numbered 1 to 3".into()));
                }
            }
        }
        Ok(())
    }
}

/// One cell of a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCell {
    pub criterion: Criterion,
    /// Generating case: the true order in example 2, the model number in
    /// example 3, and 1 in example 1.
    pub case: usize,
    pub len: usize,
    pub true_n: usize,
    pub true_m: usize,
    pub correct: u64,
    pub over: u64,
    pub under: u64,
}

impl ReportCell {
    pub fn runs(&self) -> u64 {
        self.correct + self.over + self.under
    }

    pub fn p_correct(&self) -> f64 {
        self.correct as f64 / self.runs().max(1) as f64
    }

    pub fn p_over(&self) -> f64 {
        self.over as f64 / self.runs().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<ReportCell>,
    /// Example 3: candidate fits that failed and were left out of a run.
    pub failed_fits: u64,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "criterion,case,N,true_n,true_m,correct,over,under,p_correct,p_over";

    pub fn cell(&self, criterion: Criterion, case: usize, len: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.criterion == criterion && c.case == case && c.len == len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6},{:.6}",
                c.criterion,
                c.case,
                c.len,
                c.true_n,
                c.true_m,
                c.correct,
                c.over,
                c.under,
                c.p_correct(),
                c.p_over()
            );
        }
        out
    }
}

/// Classification of one selection against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Correct,
    Over,
    Under,
}

fn order_outcome(selected: usize, truth: usize) -> Outcome {
    match selected.cmp(&truth) {
        std::cmp::Ordering::Equal => Outcome::Correct,
        std::cmp::Ordering::Greater => Outcome::Over,
        std::cmp::Ordering::Less => Outcome::Under,
    }
}

/// Over-estimation for ARMA structures means the selection strictly
/// contains the true lags; every other miss counts as under-estimation.
fn structure_outcome(selected: Structure, truth: Structure) -> Outcome {
    if selected == truth {
        Outcome::Correct
    } else if selected.strictly_contains(&truth) {
        Outcome::Over
    } else {
        Outcome::Under
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one run, derived from the master seed and the run coordinates.
pub fn run_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

type Tally = BTreeMap<(usize, usize, usize, usize), [u64; 3]>;

fn tally_add(tally: &mut Tally, key: (usize, usize, usize, usize), outcome: Outcome) {
    let slot = tally.entry(key).or_insert([0; 3]);
    slot[outcome as usize] += 1;
}

fn merge(mut a: Tally, b: Tally) -> Tally {
    for (k, v) in b {
        let slot = a.entry(k).or_insert([0; 3]);
        for i in 0..3 {
            slot[i] += v[i];
        }
    }
    a
}

/// Builds report cells in a fixed order: case, criterion, sample size.
fn cells_from(cfg: &ExperimentConfig, truths: &[(usize, usize)], tally: &Tally) -> Vec<ReportCell> {
    let mut cells = Vec::new();
    for (case, &(true_n, true_m)) in truths.iter().enumerate() {
        let case_id = cfg.cases.get(case).copied().unwrap_or(1);
        for (ci, &criterion) in cfg.criteria.iter().enumerate() {
            for (ni, &len) in cfg.sample_sizes.iter().enumerate() {
                let [correct, over, under] = tally.get(&(case, ci, ni, 0)).copied().unwrap_or([0; 3]);
                cells.push(ReportCell {
                    criterion,
                    case: case_id,
                    len,
                    true_n,
                    true_m,
                    correct,
                    over,
                    under,
                });
            }
        }
    }
    cells
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the configured example. `jobs` caps the worker count; the report
/// is identical for any value.
pub fn run_experiment(cfg: &ExperimentConfig, table: &IntegralTable, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    in_pool(jobs, || match cfg.example {
        1 => run_example1(cfg),
        2 => run_example2(cfg, table),
        _ => run_example3(cfg, table),
    })?
}

fn true_polynomial(x: f64) -> f64 {
    x * x * x - 0.5 * x * x - 5.0 * x - 1.5
}

/// Selected polynomial degree for each criterion on one data set.
fn example1_selections(cfg: &ExperimentConfig, x: &[f64], y: &[f64]) -> Result<Vec<usize>> {
    // Scaling x onto [-1, 1] only improves conditioning; fitted values and
    // hence every criterion are unchanged.
    let scaled: Vec<f64> = x.iter().map(|v| v / 3.0).collect();
    let design = polynomial_design(&scaled, MAX_DEGREE);
    let n = y.len();
    let mut scores: Vec<Vec<CriterionScore>> = vec![Vec::new(); cfg.criteria.len()];
    for degree in 0..=MAX_DEGREE {
        let gamma: Vec<usize> = (0..=degree).collect();
        let fit = fit_regression(&design, y, &gamma)?;
        let s = Structure::ar(fit.k());
        for (slot, &c) in scores.iter_mut().zip(&cfg.criteria) {
            slot.push(match c {
                Criterion::Nml => criteria::nml_regression(&fit, cfg.nml_form),
                Criterion::Bic => criteria::bic(fit.tau_hat, n, s),
                Criterion::Kicc => criteria::kicc(fit.tau_hat, n, s),
                Criterion::Kic => criteria::kic(fit.tau_hat, n, s),
                Criterion::Pls => unreachable!("rejected by validation"),
            });
        }
    }
    scores
        .iter()
        .map(|s| criteria::select(s).map(|sel| sel.structure.n - 1))
        .collect()
}

/// Example 1: degree selection for a cubic observed in white noise.
pub fn run_example1(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = cfg.runs_outer * cfg.runs_inner;
    let tasks: Vec<(usize, usize)> = (0..cfg.sample_sizes.len()).flat_map(|ni| (0..runs).map(move |r| (ni, r))).collect();
    let tally = tasks
        .par_iter()
        .map(|&(ni, r)| -> Result<Tally> {
            let len = cfg.sample_sizes[ni];
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, &[1, ni as u64, r as u64]));
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..=3.0)).collect();
            let clean: Vec<f64> = x.iter().map(|&v| true_polynomial(v)).collect();
            let y = match cfg.snr_db {
                Some(snr) => {
                    let power = clean.iter().map(|v| v * v).sum::<f64>() / len as f64;
                    let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
                    let noise = Normal::new(0.0, sd).map_err(|e| Error::Numeric(e.to_string()))?;
                    clean.iter().map(|v| v + noise.sample(&mut rng)).collect()
                }
                None => clean,
            };
            let mut t = Tally::new();
            for (ci, degree) in example1_selections(cfg, &x, &y)?.into_iter().enumerate() {
                tally_add(&mut t, (0, ci, ni, 0), order_outcome(degree, TRUE_DEGREE));
            }
            Ok(t)
        })
        .try_reduce(Tally::new, |a, b| Ok(merge(a, b)))?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        cells: cells_from(cfg, &[(TRUE_DEGREE, 0)], &tally),
        failed_fits: 0,
    })
}

/// Draws AR(n) poles: magnitudes from U(0.8, 1), phases from U(0, π) and,
/// for odd n, one real pole from U((0.8, 1) ∪ (-1, -0.8)). Draws that
/// violate admissibility are repeated.
pub fn draw_ar_poles<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CoeffModel {
    loop {
        let pairs: Vec<ComplexPair> = (0..n / 2)
            .map(|_| ComplexPair::new(rng.gen_range(0.8..1.0), rng.gen_range(0.0..PI)))
            .collect();
        let reals: Vec<f64> = (0..n % 2)
            .map(|_| {
                let g: f64 = rng.gen_range(0.8..1.0);
                if rng.gen_bool(0.5) {
                    g
                } else {
                    -g
                }
            })
            .collect();
        if let Ok(model) = RootModel::ar(reals, pairs, 1.0).and_then(|r| r.to_coeffs()) {
            return model;
        }
    }
}

/// Selected AR order for each criterion on one series.
fn example2_selections(cfg: &ExperimentConfig, series: &TimeSeries, table: &IntegralTable) -> Result<Vec<usize>> {
    let len = series.len();
    let ladder = fit_ar_ladder(series, AR_MAX_ORDER)?;
    let mut out = Vec::with_capacity(cfg.criteria.len());
    for &c in &cfg.criteria {
        let scores: Vec<CriterionScore> = if c == Criterion::Pls {
            criteria::pls(&pls_errors(series, AR_MAX_ORDER, default_pls_start(AR_MAX_ORDER))?.totals())
        } else {
            (1..=AR_MAX_ORDER)
                .map(|n| {
                    let s2 = ladder.order(n).expect("full ladder").sigma2_hat;
                    let s = Structure::ar(n);
                    Ok(match c {
                        Criterion::Nml => criteria::nml_arma(s2, len, n, 0, table, cfg.integral_mode)?,
                        Criterion::Bic => criteria::bic(s2, len, s),
                        Criterion::Kicc => criteria::kicc(s2, len, s),
                        _ => criteria::kic(s2, len, s),
                    })
                })
                .collect::<Result<_>>()?
        };
        out.push(criteria::select(&scores)?.structure.n);
    }
    Ok(out)
}

/// Example 2: AR order estimation with random poles near the unit circle.
pub fn run_example2(cfg: &ExperimentConfig, table: &IntegralTable) -> Result<ExperimentReport> {
    cfg.validate()?;
    let max_len = *cfg.sample_sizes.iter().max().expect("validated");
    let tasks: Vec<(usize, usize)> = (0..cfg.cases.len()).flat_map(|c| (0..cfg.runs_outer).map(move |o| (c, o))).collect();
    let tally = tasks
        .par_iter()
        .map(|&(case, outer)| -> Result<Tally> {
            let n = cfg.cases[case];
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, &[2, n as u64, outer as u64]));
            let model = draw_ar_poles(n, &mut rng);
            let mut t = Tally::new();
            for inner in 0..cfg.runs_inner {
                let seed = run_seed(cfg.seed, &[2, n as u64, outer as u64, inner as u64 + 1]);
                let z = simulate(&model, max_len + BURN_IN, BURN_IN, seed)?;
                for (ni, &len) in cfg.sample_sizes.iter().enumerate() {
                    for (ci, sel) in example2_selections(cfg, &z.prefix(len), table)?.into_iter().enumerate() {
                        tally_add(&mut t, (case, ci, ni, 0), order_outcome(sel, n));
                    }
                }
            }
            Ok(t)
        })
        .try_reduce(Tally::new, |a, b| Ok(merge(a, b)))?;
    let truths: Vec<(usize, usize)> = cfg.cases.iter().map(|&n| (n, 0)).collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        cells: cells_from(cfg, &truths, &tally),
        failed_fits: 0,
    })
}

/// The three generating ARMA models of example 3.
pub fn example3_models() -> Vec<CoeffModel> {
    vec![
        CoeffModel::new(vec![-0.5], vec![0.8], 1.0).expect("admissible"),
        CoeffModel::new(vec![0.64, 0.7], vec![0.8], 1.0).expect("admissible"),
        CoeffModel::new(vec![0.3], vec![0.5], 1.0).expect("admissible"),
    ]
}

/// Candidate set `{ARMA(n, m) : n, m ≥ 1, n + m ≤ 6}`.
pub fn arma_candidates() -> Vec<Structure> {
    (1..6).flat_map(|n| (1..=6 - n).map(move |m| Structure::arma(n, m))).collect()
}

/// Selected structure per criterion (`None` when no candidate could be
/// scored) and the number of failed candidate fits.
fn example3_selections(cfg: &ExperimentConfig, series: &TimeSeries, table: &IntegralTable) -> Result<(Vec<Option<Structure>>, u64)> {
    let len = series.len();
    let mut fits = Vec::new();
    let mut failed = 0;
    for s in arma_candidates() {
        match fit_arma(series, s.n, s.m) {
            Ok(f) => fits.push((s, f.sigma2_hat)),
            Err(_) => failed += 1,
        }
    }
    let mut out = Vec::with_capacity(cfg.criteria.len());
    for &c in &cfg.criteria {
        let scores: Vec<CriterionScore> = fits
            .iter()
            .map(|&(s, s2)| {
                Ok(match c {
                    Criterion::Nml => criteria::nml_arma(s2, len, s.n, s.m, table, cfg.integral_mode)?,
                    Criterion::Bic => criteria::bic(s2, len, s),
                    Criterion::Kicc => criteria::kicc(s2, len, s),
                    _ => criteria::kic(s2, len, s),
                })
            })
            .collect::<Result<_>>()?;
        out.push(criteria::select(&scores).ok().map(|sel| sel.structure));
    }
    Ok((out, failed))
}

/// Example 3: ARMA structure selection over the 15 candidates.
pub fn run_example3(cfg: &ExperimentConfig, table: &IntegralTable) -> Result<ExperimentReport> {
    cfg.validate()?;
    let models = example3_models();
    let max_len = *cfg.sample_sizes.iter().max().expect("validated");
    let runs = cfg.runs_outer * cfg.runs_inner;
    let tasks: Vec<(usize, usize)> = (0..cfg.cases.len()).flat_map(|c| (0..runs).map(move |r| (c, r))).collect();
    let (tally, failed) = tasks
        .par_iter()
        .map(|&(case, run)| -> Result<(Tally, u64)> {
            let id = cfg.cases[case];
            let model = &models[id - 1];
            let truth = Structure::arma(model.n(), model.m());
            let z = simulate(model, max_len + BURN_IN, BURN_IN, run_seed(cfg.seed, &[3, id as u64, run as u64]))?;
            let mut t = Tally::new();
            let mut failed = 0;
            for (ni, &len) in cfg.sample_sizes.iter().enumerate() {
                let (sels, f) = example3_selections(cfg, &z.prefix(len), table)?;
                failed += f;
                for (ci, sel) in sels.into_iter().enumerate() {
                    let outcome = sel.map_or(Outcome::Under, |s| structure_outcome(s, truth));
                    tally_add(&mut t, (case, ci, ni, 0), outcome);
                }
            }
            Ok((t, failed))
        })
        .try_reduce(|| (Tally::new(), 0), |a, b| Ok((merge(a.0, b.0), a.1 + b.1)))?;
    let truths: Vec<(usize, usize)> = cfg.cases.iter().map(|&id| (models[id - 1].n(), models[id - 1].m())).collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        cells: cells_from(cfg, &truths, &tally),
        failed_fits: failed,
    })
}

/// Path of the JSON sidecar written next to a CSV report.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Sidecar contents: everything needed to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSidecar {
    pub config: ExperimentConfig,
    pub failed_fits: u64,
    pub crate_version: String,
}

/// Writes the CSV report and its JSON sidecar.
pub fn emit_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, report.to_csv())?;
    let sidecar = ReportSidecar {
        config: report.config.clone(),
        failed_fits: report.failed_fits,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

/// Re-runs the experiment described by a sidecar file.
pub fn replay(sidecar: &Path, table: &IntegralTable, jobs: Option<usize>) -> Result<ExperimentReport> {
    let s: ReportSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    run_experiment(&s.config, table, jobs)
}
