//! Python bindings. Reports cross the boundary as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use spikelab::config::ExperimentConfig;
use spikelab::model::{self, Hypothesis, Matrix, ModelParams};
use spikelab::prior::PriorSpec;
use spikelab::quadrature::GaussHermite;
use spikelab::{exact, harness, predict, rs, spectral};

fn err(e: spikelab::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn hypothesis(text: &str) -> PyResult<Hypothesis> {
    match text {
        "null" => Ok(Hypothesis::Null),
        "spiked" => Ok(Hypothesis::Spiked),
        _ => Err(PyValueError::new_err(format!("hypothesis must be `null` or `spiked`, got `{text}`"))),
    }
}

/// A standardized prior on the spike entries.
#[pyclass(frozen, module = "spikelab")]
struct Prior {
    inner: spikelab::prior::Prior,
}

#[pymethods]
impl Prior {
    /// Accepts `rademacher`, `sparse_rademacher:<rho>`, `gaussian_rs_only` or a JSON object.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec = PriorSpec::parse(spec).map_err(err)?;
        Ok(Prior { inner: spikelab::prior::Prior::from_spec(&spec).map_err(err)? })
    }

    #[getter]
    fn atoms(&self) -> Vec<f64> {
        self.inner.atoms().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }

    fn is_bounded(&self) -> bool {
        self.inner.is_bounded()
    }

    fn __repr__(&self) -> String {
        format!("Prior({:?})", self.inner.family())
    }
}

/// An observed matrix with optional planted factors.
#[pyclass(frozen, module = "spikelab")]
struct Instance {
    inner: model::Instance,
}

#[pymethods]
impl Instance {
    #[staticmethod]
    #[pyo3(signature = (n, m, beta, seed, hypothesis = "spiked", prior_u = None, prior_v = None))]
    fn generate(
        n: usize,
        m: usize,
        beta: f64,
        seed: u64,
        hypothesis: &str,
        prior_u: Option<&Prior>,
        prior_v: Option<&Prior>,
    ) -> PyResult<Self> {
        let params = ModelParams::new(n, m, beta).map_err(err)?;
        let rad = spikelab::prior::Prior::rademacher();
        let pu = prior_u.map_or(&rad, |p| &p.inner);
        let pv = prior_v.map_or(&rad, |p| &p.inner);
        let inner = match self::hypothesis(hypothesis)? {
            Hypothesis::Null => model::generate_null(&params, seed),
            Hypothesis::Spiked => model::generate_spiked(&params, pu, pv, seed).map_err(err)?,
        };
        Ok(Instance { inner })
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Instance { inner: model::Instance::from_matrix(Matrix::from_rows(&rows).map_err(err)?) })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_rows(), self.inner.n_cols())
    }

    #[getter]
    fn data(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_rows()).map(|i| self.inner.data.row(i).to_vec()).collect()
    }

    #[getter]
    fn planted(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner.planted.as_ref().map(|p| (p.u.clone(), p.v.clone()))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn hypothesis(&self) -> &'static str {
        self.inner.hypothesis.as_str()
    }

    /// `-H(u, v)` at signal strength `beta`.
    fn hamiltonian(&self, beta: f64, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        model::hamiltonian(&self.inner, beta, &u, &v).map_err(err)
    }

    /// Exact `log L` by enumeration over the configurations of `v`.
    fn log_lr(&self, beta: f64, prior_u: &Prior, prior_v: &Prior) -> PyResult<f64> {
        Ok(exact::exact_log_lr(&self.inner.data, beta, &prior_u.inner, &prior_v.inner).map_err(err)?.value)
    }

    /// Largest eigenvalue of `YYᵀ/N`.
    fn top_eigenvalue(&self) -> f64 {
        spectral::top_singular_value_sq(&self.inner.data) / self.inner.n_rows() as f64
    }

    fn __repr__(&self) -> String {
        format!("Instance({}x{}, {})", self.inner.n_rows(), self.inner.n_cols(), self.inner.hypothesis.as_str())
    }
}

/// Limiting means and variance of `log L`, or None outside `alpha beta² < 1`.
#[pyfunction]
fn lr_asymptotics(py: Python<'_>, alpha: f64, beta: f64) -> PyResult<Option<Bound<'_, PyAny>>> {
    let a = predict::lr_asymptotics(alpha, beta);
    if a.valid {
        Ok(Some(to_py(py, &a)?))
    } else {
        Ok(None)
    }
}

#[pyfunction]
fn optimal_error(alpha: f64, beta: f64) -> PyResult<f64> {
    predict::optimal_error(alpha, beta).map_err(err)
}

#[pyfunction]
fn kl_limit(alpha: f64, beta: f64) -> PyResult<f64> {
    predict::kl_limit(alpha, beta).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (alpha, beta, prior_u, prior_v, quad_nodes = 61))]
fn solve_rs<'py>(
    py: Python<'py>,
    alpha: f64,
    beta: f64,
    prior_u: &Prior,
    prior_v: &Prior,
    quad_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let quad = GaussHermite::new(quad_nodes).map_err(err)?;
    let sol = py
        .detach(|| rs::solve_rs(alpha, beta, &prior_u.inner, &prior_v.inner, &quad))
        .map_err(err)?;
    to_py(py, &sol)
}

#[pyfunction]
#[pyo3(signature = (alphas, prior_u, prior_v, tol = rs::PHASE_TOL, quad_nodes = 61))]
fn phase_boundary<'py>(
    py: Python<'py>,
    alphas: Vec<f64>,
    prior_u: &Prior,
    prior_v: &Prior,
    tol: f64,
    quad_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let quad = GaussHermite::new(quad_nodes).map_err(err)?;
    let pb = py
        .detach(|| rs::phase_boundary(&alphas, &prior_u.inner, &prior_v.inner, tol, &quad))
        .map_err(err)?;
    to_py(py, &pb)
}

/// Runs a harness experiment from a JSON config document and returns its report.
///
/// `kind` is one of fluctuations, test-error, kl, nishimori, derivative-check, overlaps,
/// spectral-power.
#[pyfunction]
#[pyo3(signature = (kind, config = "{}"))]
fn run_experiment<'py>(py: Python<'py>, kind: &str, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    macro_rules! go {
        ($f:path) => {{
            let rep = py.detach(|| $f(&cfg)).map_err(err)?;
            to_py(py, &rep)
        }};
    }
    match kind {
        "fluctuations" => go!(harness::fluctuation_experiment),
        "test-error" => go!(harness::lr_test_error),
        "kl" => go!(harness::kl_experiment),
        "nishimori" => go!(harness::nishimori_check),
        "derivative-check" => go!(harness::derivative_identity_check),
        "overlaps" => go!(harness::overlap_scaling),
        "spectral-power" => go!(harness::spectral_power_experiment),
        _ => Err(PyValueError::new_err(format!("unknown experiment `{kind}`"))),
    }
}

#[pymodule(name = "spikelab")]
fn spikelab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Prior>()?;
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(lr_asymptotics, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_error, m)?)?;
    m.add_function(wrap_pyfunction!(kl_limit, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rs, m)?)?;
    m.add_function(wrap_pyfunction!(phase_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
