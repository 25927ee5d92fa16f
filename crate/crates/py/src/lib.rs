//! Python bindings: synthetic data, fitting, the Z-step and its verifiers,
//! diagnostics and the experiment harness.
//!
//! Matrices cross the boundary as lists of rows (any sequence of float
//! sequences, including 2-D numpy arrays). Reports come back as dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use fairsparse::altopt::{self, FitConfig, Solution};
use fairsparse::dataio::{load_csv_with, LoadOptions, PreprocessOptions};
use fairsparse::diagnostics;
use fairsparse::experiment::{self, ExperimentGrid, GammaRule};
use fairsparse::fairlasso::SolverConfig;
use fairsparse::numkit::Matrix;
use fairsparse::synthgen::{self, GenerativeConfig, GroundTruth};
use fairsparse::zstep::{self, OracleConfig};
use fairsparse::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Dimension(_) | Error::TooLarge { .. } | Error::Parse { .. } | Error::Schema(_) | Error::Data(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// Design matrix `x` (n rows) and response `y`.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: synthgen::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let inner = synthgen::Dataset::new(matrix(x)?, y).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.x)
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

#[pyclass(name = "GroundTruth")]
struct PyGroundTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyGroundTruth {
    #[getter]
    fn w_star(&self) -> Vec<f64> {
        self.inner.w_star.clone()
    }

    #[getter]
    fn z_star(&self) -> Vec<f64> {
        self.inner.z_star.clone()
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.support.clone()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
}

/// Output of [`fit`]: weights, ±1 labels and the objective trace.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: Solution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.clone()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z.clone()
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective()
    }

    fn support(&self) -> Vec<usize> {
        self.inner.support()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Solution::from_json(text).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(nnz={}, iterations={}, converged={})",
            self.inner.support().len(),
            self.inner.iterations,
            self.inner.converged
        )
    }
}

/// Draws a ground truth and a dataset. `n` overrides `beta`, where
/// `n = round(10^beta * ln d)`.
#[pyfunction]
#[pyo3(signature = (d=100, s=10, n=None, beta=2.0, gamma=2.0, k=0.15, seed=0, shuffle_z=false))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    d: usize,
    s: usize,
    n: Option<usize>,
    beta: f64,
    gamma: f64,
    k: f64,
    seed: u64,
    shuffle_z: bool,
) -> PyResult<(PyDataset, PyGroundTruth)> {
    let cfg = GenerativeConfig {
        d,
        s,
        n: n.unwrap_or_else(|| experiment::samples_for(beta, d)),
        gamma,
        k,
        seed,
        shuffle_z,
        ..GenerativeConfig::default()
    };
    let truth = synthgen::make_ground_truth(&cfg).map_err(py_err)?;
    let data = synthgen::generate_dataset(&truth, &cfg).map_err(py_err)?;
    Ok((PyDataset { inner: data }, PyGroundTruth { inner: truth }))
}

/// `128 rho k / alpha * sqrt(ln d) / n`
#[pyfunction]
#[pyo3(signature = (d, n, k=0.15, rho=1.0, alpha=1.0))]
fn lambda_default(d: usize, n: usize, k: f64, rho: f64, alpha: f64) -> PyResult<f64> {
    fairsparse::fairlasso::lambda_default(rho, k, alpha, d, n).map_err(py_err)
}

/// Alternate optimization. `lam=None` uses the theoretical default.
#[pyfunction]
#[pyo3(signature = (data, gamma, lam=None, max_rounds=100, z_init=None))]
fn fit(
    py: Python<'_>,
    data: &PyDataset,
    gamma: f64,
    lam: Option<f64>,
    max_rounds: usize,
    z_init: Option<Vec<f64>>,
) -> PyResult<PySolution> {
    let ds = &data.inner;
    let lambda = match lam {
        Some(l) => l,
        None => SolverConfig::default().lambda_default(ds.d(), ds.n()).map_err(py_err)?,
    };
    let cfg = FitConfig {
        max_rounds,
        z_init,
        ..FitConfig::new(gamma, lambda)
    };
    let inner = py.detach(|| altopt::fit(ds, &cfg)).map_err(py_err)?;
    Ok(PySolution { inner })
}

/// `y − γ z`
#[pyfunction]
fn debias(y: Vec<f64>, z: Vec<f64>, gamma: f64) -> PyResult<Vec<f64>> {
    altopt::debias(&y, &z, gamma).map_err(py_err)
}

/// Closed-form Z-step: returns `(z, objective)`.
#[pyfunction]
fn z_step(x: Vec<Vec<f64>>, y: Vec<f64>, w: Vec<f64>, gamma: f64) -> PyResult<(Vec<f64>, f64)> {
    let s = zstep::solve_z_step(&matrix(x)?, &y, &w, gamma).map_err(py_err)?;
    Ok((s.z, s.objective))
}

/// SDP verifier for the Z-step: objective, dual lower bound and the
/// first-column tail of the returned Z.
#[pyfunction]
fn sdp_oracle<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
    gamma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = zstep::assemble_m(&matrix(x)?, &y, &w, gamma).map_err(py_err)?;
    let r = py
        .detach(|| zstep::elliptope_sdp_oracle(&m, &OracleConfig::default()))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("objective", r.objective)?;
    out.set_item("lower_bound", r.lower_bound)?;
    out.set_item("iterations", r.iterations)?;
    out.set_item("z", r.z.first_column_tail())?;
    Ok(out)
}

/// Exhaustive minimization over all sign vectors (n <= limit).
#[pyfunction]
#[pyo3(signature = (x, y, gamma, lam, limit=zstep::MIQP_DEFAULT_LIMIT))]
fn miqp_brute_force<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    gamma: f64,
    lam: f64,
    limit: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let x = matrix(x)?;
    let r = py
        .detach(|| zstep::miqp_brute_force(&x, &y, gamma, lam, limit))
        .map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (data, solution, gamma, lam, tol=1e-6))]
fn check_kkt<'py>(
    py: Python<'py>,
    data: &PyDataset,
    solution: &PySolution,
    gamma: f64,
    lam: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = diagnostics::check_kkt(&data.inner, &solution.inner, gamma, lam, tol).map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn check_assumptions<'py>(py: Python<'py>, x: Vec<Vec<f64>>, support: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    let r = diagnostics::check_assumptions(&matrix(x)?, &support).map_err(py_err)?;
    to_py(py, &r)
}

/// Primal-dual witness at the true labels and support, with the spectrum
/// of the dual matrix.
#[pyfunction]
#[pyo3(signature = (data, truth, lam=None))]
fn witness<'py>(
    py: Python<'py>,
    data: &PyDataset,
    truth: &PyGroundTruth,
    lam: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let (ds, t) = (&data.inner, &truth.inner);
    let lambda = match lam {
        Some(l) => l,
        None => SolverConfig::default().lambda_default(ds.d(), ds.n()).map_err(py_err)?,
    };
    let w = diagnostics::build_witness(
        ds,
        &t.z_star,
        &t.support,
        t.gamma,
        &SolverConfig::with_lambda(lambda),
        Some(&t.w_star),
    )
    .map_err(py_err)?;
    let out = to_py(py, &w)?;
    out.set_item("spectrum", to_py(py, &diagnostics::lambda_spectrum(&w))?)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (data, gamma, trials=1000, seed=0))]
fn invexity_probe<'py>(
    py: Python<'py>,
    data: &PyDataset,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = diagnostics::invexity_probe(&data.inner, gamma, trials, seed).map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn metric_jaccard(s: Vec<usize>, s_hat: Vec<usize>) -> f64 {
    experiment::metric_jaccard(&s, &s_hat)
}

#[pyfunction]
fn metric_exact_z(z: Vec<f64>, z_hat: Vec<f64>) -> PyResult<u8> {
    experiment::metric_exact_z(&z, &z_hat).map_err(py_err)
}

/// Recovery curve over a `(d, beta)` grid with the synthetic protocol
/// (`s = 10`, `γ = 2`, `k = 0.15`, default regularizer).
#[pyfunction]
#[pyo3(signature = (dims, betas, runs=30, seed=0))]
fn recovery_experiment<'py>(
    py: Python<'py>,
    dims: Vec<usize>,
    betas: Vec<f64>,
    runs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut grid = ExperimentGrid::protocol_defaults(dims, betas, seed);
    grid.runs = runs;
    let out = py
        .detach(|| experiment::run_recovery_experiment(&grid))
        .map_err(py_err)?;
    to_py(py, &out.curve)
}

#[pyfunction]
#[pyo3(signature = (gammas, d=100, beta=2.0, runs=30, seed=0))]
fn gamma_sensitivity<'py>(
    py: Python<'py>,
    gammas: Vec<f64>,
    d: usize,
    beta: f64,
    runs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut grid = ExperimentGrid::protocol_defaults(vec![d], vec![beta], seed);
    grid.runs = runs;
    let (rows, _) = py
        .detach(|| experiment::run_gamma_sensitivity(&grid, &gammas))
        .map_err(py_err)?;
    to_py(py, &rows)
}

/// Loads a CSV, preprocesses it and fits with `γ = (max y − min y)/2`
/// unless `gamma` is given.
#[pyfunction]
#[pyo3(signature = (path, target, drop=Vec::new(), delimiter=",", lam=0.15, gamma=None))]
fn fit_real<'py>(
    py: Python<'py>,
    path: &str,
    target: &str,
    drop: Vec<String>,
    delimiter: &str,
    lam: f64,
    gamma: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let [delim] = delimiter.as_bytes() else {
        return Err(PyValueError::new_err("delimiter must be a single byte"));
    };
    let table = load_csv_with(
        path,
        &LoadOptions {
            delimiter: *delim,
            names: None,
        },
    )
    .map_err(py_err)?;
    let mut opts = PreprocessOptions::new(target);
    opts.drop_columns = drop;
    let rule = gamma.map_or(GammaRule::HalfRange, GammaRule::Fixed);
    let report = py
        .detach(|| experiment::run_real_data(&table, &opts, lam, rule))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn fairsparse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_default, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(debias, m)?)?;
    m.add_function(wrap_pyfunction!(z_step, m)?)?;
    m.add_function(wrap_pyfunction!(sdp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(miqp_brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(check_kkt, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions, m)?)?;
    m.add_function(wrap_pyfunction!(witness, m)?)?;
    m.add_function(wrap_pyfunction!(invexity_probe, m)?)?;
    m.add_function(wrap_pyfunction!(metric_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(metric_exact_z, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_real, m)?)?;
    Ok(())
}
