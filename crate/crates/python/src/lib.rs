//! Python bindings: root/coefficient models, information matrices, QMC
//! integrals, order selection and the simulation studies.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stoc_order::criteria::{self, Criterion, CriterionScore, IntegralMode, NmlRegressionForm, ScoreStatus};
use stoc_order::estimators;
use stoc_order::experiments::{self, ExperimentConfig};
use stoc_order::fisher;
use stoc_order::model::{self as core_model, ComplexPair, RootConfig, TimeSeries};
use stoc_order::qmc;
use stoc_order::sobol::DirectionSet;
use stoc_order::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::InvalidInput(_)
        | Error::Config(_)
        | Error::Inadmissible(_)
        | Error::Degenerate(_)
        | Error::DegenerateInput(_)
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn pairs(v: &[(f64, f64)]) -> Vec<ComplexPair> {
    v.iter().map(|&(r, phi)| ComplexPair::new(r, phi)).collect()
}

fn series(values: Vec<f64>) -> PyResult<TimeSeries> {
    TimeSeries::new(values).map_err(py_err)
}

/// ARMA model in coefficient form, `A(q) y = B(q) e` with
/// `A = 1 + a_1 q^-1 + ...`, `B = 1 + b_1 q^-1 + ...`.
#[pyclass(name = "CoeffModel", module = "stoc_order", frozen)]
#[derive(Clone)]
struct PyCoeffModel(core_model::CoeffModel);

#[pymethods]
impl PyCoeffModel {
    #[new]
    #[pyo3(signature = (a, b=Vec::new(), sigma2=1.0))]
    fn new(a: Vec<f64>, b: Vec<f64>, sigma2: f64) -> PyResult<Self> {
        core_model::CoeffModel::new(a, b, sigma2).map(Self).map_err(py_err)
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.0.a().to_vec()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.0.b().to_vec()
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2()
    }

    fn to_roots(&self) -> PyResult<PyRootModel> {
        self.0.to_roots().map(PyRootModel).map_err(py_err)
    }

    /// `length` samples after discarding `burn_in` start-up samples.
    #[pyo3(signature = (length, seed, burn_in=100))]
    fn simulate(&self, length: usize, seed: u64, burn_in: usize) -> PyResult<Vec<f64>> {
        core_model::simulate(&self.0, length + burn_in, burn_in, seed)
            .map(|s| s.values().to_vec())
            .map_err(py_err)
    }

    /// One-step prediction errors of the model on `series`.
    fn prediction_errors(&self, series_values: Vec<f64>) -> PyResult<Vec<f64>> {
        core_model::prediction_errors(&series(series_values)?, &self.0)
            .map(|p| p.residuals)
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("CoeffModel(a={:?}, b={:?}, sigma2={})", self.0.a(), self.0.b(), self.0.sigma2())
    }
}

/// ARMA model in root form; complex roots are `(magnitude, phase)` pairs
/// standing for a conjugate pair.
#[pyclass(name = "RootModel", module = "stoc_order", frozen)]
#[derive(Clone)]
struct PyRootModel(core_model::RootModel);

#[pymethods]
impl PyRootModel {
    #[new]
    #[pyo3(signature = (real_poles=Vec::new(), complex_poles=Vec::new(), real_zeros=Vec::new(), complex_zeros=Vec::new(), sigma2=1.0))]
    fn new(
        real_poles: Vec<f64>,
        complex_poles: Vec<(f64, f64)>,
        real_zeros: Vec<f64>,
        complex_zeros: Vec<(f64, f64)>,
        sigma2: f64,
    ) -> PyResult<Self> {
        core_model::RootModel::new(real_poles, pairs(&complex_poles), real_zeros, pairs(&complex_zeros), sigma2)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    /// `(n, m, n1, m1)`.
    #[getter]
    fn config(&self) -> (usize, usize, usize, usize) {
        let c = self.0.config();
        (c.n, c.m, c.n1, c.m1)
    }

    /// Flattened pole/zero parameters.
    fn theta(&self) -> Vec<f64> {
        self.0.theta()
    }

    fn to_coeffs(&self) -> PyResult<PyCoeffModel> {
        self.0.to_coeffs().map(PyCoeffModel).map_err(py_err)
    }

    /// Fisher information in root coordinates as a list of rows.
    #[pyo3(signature = (include_sigma=false))]
    fn fisher_information(&self, include_sigma: bool) -> Vec<Vec<f64>> {
        let j = fisher::fim_root(&self.0, include_sigma);
        (0..j.dim()).map(|u| (0..j.dim()).map(|v| j.get(u, v)).collect()).collect()
    }

    /// `|J(θ)|^{1/2}` of the pole/zero block; `None` if not evaluable.
    fn sqrt_det_fisher(&self) -> Option<f64> {
        match fisher::sqrt_det_fim(&self.0) {
            fisher::SqrtDet::Finite(v) => Some(v),
            fisher::SqrtDet::Overflow => Some(f64::INFINITY),
            fisher::SqrtDet::Invalid => None,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "RootModel(real_poles={:?}, complex_poles={:?}, real_zeros={:?}, complex_zeros={:?}, sigma2={})",
            self.0.real_poles(),
            self.0.complex_poles().iter().map(|p| (p.magnitude, p.phase)).collect::<Vec<_>>(),
            self.0.real_zeros(),
            self.0.complex_zeros().iter().map(|p| (p.magnitude, p.phase)).collect::<Vec<_>>(),
            self.0.sigma2()
        )
    }
}

/// Cache of `ln ∫|J|^{1/2}` values keyed by root configuration.
#[pyclass(name = "IntegralTable", module = "stoc_order")]
#[derive(Clone)]
struct PyIntegralTable(qmc::IntegralTable);

#[pymethods]
impl PyIntegralTable {
    #[new]
    fn new() -> Self {
        Self(qmc::IntegralTable::new())
    }

    /// The table shipped with the library.
    #[staticmethod]
    fn bundled() -> Self {
        Self(qmc::IntegralTable::bundled())
    }

    /// Reads a cache file; a missing file gives an empty table.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        qmc::IntegralTable::load_or_empty(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Cached `ln` integral, falling back to the all-pole equivalent.
    #[pyo3(signature = (n, m=0, n1=None, m1=None))]
    fn ln_integral(&self, n: usize, m: usize, n1: Option<usize>, m1: Option<usize>) -> PyResult<Option<f64>> {
        let config = root_config(n, m, n1, m1)?;
        Ok(self.0.lookup(config).map(|l| l.ln_integral))
    }

    /// Integrates the configuration unless a good enough entry exists.
    #[pyo3(signature = (n, m=0, n1=None, m1=None, points=1_000_000))]
    fn ensure(&mut self, py: Python<'_>, n: usize, m: usize, n1: Option<usize>, m1: Option<usize>, points: u64) -> PyResult<f64> {
        let config = root_config(n, m, n1, m1)?;
        py.allow_threads(|| qmc::cache_lookup_or_compute(&mut self.0, config, points))
            .map(|(v, _)| v)
            .map_err(py_err)
    }
}

fn root_config(n: usize, m: usize, n1: Option<usize>, m1: Option<usize>) -> PyResult<RootConfig> {
    RootConfig::new(n, m, n1.unwrap_or(n % 2), m1.unwrap_or(m % 2)).map_err(py_err)
}

fn parse_criterion(name: &str) -> PyResult<Criterion> {
    name.parse().map_err(py_err)
}

/// QMC estimate of `∫|J(θ)|^{1/2} dθ` for one root configuration.
#[pyfunction]
#[pyo3(signature = (n, m=0, n1=None, m1=None, points=1_000_000, generator="bratley-fox"))]
fn integrate<'py>(
    py: Python<'py>,
    n: usize,
    m: usize,
    n1: Option<usize>,
    m1: Option<usize>,
    points: u64,
    generator: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let config = root_config(n, m, n1, m1)?;
    let set = DirectionSet::from_version(generator)
        .or(match generator {
            "bratley-fox" => Some(DirectionSet::BratleyFox),
            "joe-kuo" => Some(DirectionSet::JoeKuo),
            _ => None,
        })
        .ok_or_else(|| PyValueError::new_err(format!("unknown generator '{generator}'")))?;
    let est = py
        .allow_threads(|| qmc::integrate_sqrt_fim_with(config, points, set))
        .map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("value", est.value)?;
    d.set_item("ln_value", est.ln_value())?;
    d.set_item("points", est.points)?;
    d.set_item("skipped", est.skipped)?;
    d.set_item("generator", est.generator.version())?;
    Ok(d)
}

/// Prewindowed least-squares AR fits of orders `1..=max_order`, as
/// `(a, sigma2_hat)` tuples.
#[pyfunction]
fn fit_ar(values: Vec<f64>, max_order: usize) -> PyResult<Vec<(Vec<f64>, f64)>> {
    let ladder = estimators::fit_ar_ladder(&series(values)?, max_order).map_err(py_err)?;
    Ok(ladder.orders.into_iter().map(|o| (o.a, o.sigma2_hat)).collect())
}

/// Prediction-error ARMA fit; returns the model and the residual variance.
#[pyfunction]
fn fit_arma(py: Python<'_>, values: Vec<f64>, n: usize, m: usize) -> PyResult<(PyCoeffModel, f64)> {
    let s = series(values)?;
    let fit = py.allow_threads(|| estimators::fit_arma(&s, n, m)).map_err(py_err)?;
    Ok((PyCoeffModel(fit.model), fit.sigma2_hat))
}

fn score_dict<'py>(py: Python<'py>, s: &CriterionScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("n", s.structure.n)?;
    d.set_item("m", s.structure.m)?;
    d.set_item("fit_term", s.fit_term)?;
    d.set_item("param_term", s.param_term)?;
    d.set_item("integral_term", s.integral_term)?;
    d.set_item("total", s.total)?;
    d.set_item("defined", s.status != ScoreStatus::Undefined)?;
    Ok(d)
}

/// Scores the candidate structures on a series and returns
/// `((n, m), scores)` for the selected structure.
#[pyfunction]
#[pyo3(signature = (values, max_order=6, criterion="nml", arma=false, table=None, all_configs=false))]
fn select<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    max_order: usize,
    criterion: &str,
    arma: bool,
    table: Option<PyRef<'py, PyIntegralTable>>,
    all_configs: bool,
) -> PyResult<((usize, usize), Vec<Bound<'py, PyDict>>)> {
    let s = series(values)?;
    let c = parse_criterion(criterion)?;
    let bundled;
    let table = match &table {
        Some(t) => &t.0,
        None => {
            bundled = qmc::IntegralTable::bundled();
            &bundled
        }
    };
    let mode = if all_configs {
        IntegralMode::AllConfigs
    } else {
        IntegralMode::DefaultConfig
    };
    let result = criteria::score_series(&s, max_order, c, arma, table, mode).map_err(py_err)?;
    let sel = criteria::select(&result.scores).map_err(py_err)?;
    let scores = result.scores.iter().map(|x| score_dict(py, x)).collect::<PyResult<_>>()?;
    Ok(((sel.structure.n, sel.structure.m), scores))
}

/// Runs one of the simulation studies and returns its CSV report.
#[pyfunction]
#[pyo3(signature = (example, seed=1, runs_outer=None, runs_inner=None, sizes=None, criteria=None, cases=None, nml_form=None, jobs=None, table=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    example: u8,
    seed: u64,
    runs_outer: Option<usize>,
    runs_inner: Option<usize>,
    sizes: Option<Vec<usize>>,
    criteria: Option<Vec<String>>,
    cases: Option<Vec<usize>>,
    nml_form: Option<&str>,
    jobs: Option<usize>,
    table: Option<PyRef<'_, PyIntegralTable>>,
) -> PyResult<String> {
    let mut cfg = ExperimentConfig::for_example(example).map_err(py_err)?;
    cfg.seed = seed;
    if let Some(v) = runs_outer {
        cfg.runs_outer = v;
    }
    if let Some(v) = runs_inner {
        cfg.runs_inner = v;
    }
    if let Some(v) = sizes {
        cfg.sample_sizes = v;
    }
    if let Some(v) = criteria {
        cfg.criteria = v.iter().map(|c| parse_criterion(c)).collect::<PyResult<_>>()?;
    }
    if let Some(v) = cases {
        cfg.cases = v;
    }
    if let Some(f) = nml_form {
        cfg.nml_form = f.parse::<NmlRegressionForm>().map_err(py_err)?;
    }
    let table = table.map_or_else(qmc::IntegralTable::bundled, |t| t.0.clone());
    let report = py
        .allow_threads(|| experiments::run_experiment(&cfg, &table, jobs))
        .map_err(py_err)?;
    Ok(report.to_csv())
}

#[pymodule]
#[pyo3(name = "stoc_order")]
fn stoc_order_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoeffModel>()?;
    m.add_class::<PyRootModel>()?;
    m.add_class::<PyIntegralTable>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ar, m)?)?;
    m.add_function(wrap_pyfunction!(fit_arma, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
