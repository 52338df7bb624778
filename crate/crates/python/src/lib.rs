//! Python bindings. Distributions are plain lists of floats, matrices are
//! lists of rows, and reports come back as dicts.

use nlmarkov::bounds::{bound_at as core_bound_at, per_step_rate as core_rate, BoundParams};
use nlmarkov::casestudy::{build_example, check_three_step_symbolic, table1 as core_table1};
use nlmarkov::coefficients::{self, Regime, SearchConfig};
use nlmarkov::invariant;
use nlmarkov::kernel_file::KernelFile;
use nlmarkov::measure;
use nlmarkov::montecarlo;
use nlmarkov::{AffineKernel, Distribution, Error, KernelHandle};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    pynlmarkov,
    InconclusiveError,
    PyException,
    "No convergence guarantee for these coefficients."
);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Inconclusive { .. } => InconclusiveError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dist(probs: Vec<f64>) -> PyResult<Distribution> {
    Distribution::new(probs).map_err(to_py)
}

/// Affine measure-dependent kernel `P_mu(i, j) = base[i][j] + sum_l coeff[i][j][l] mu_l`.
#[pyclass(name = "AffineKernel", module = "pynlmarkov", frozen)]
struct PyAffineKernel {
    inner: AffineKernel,
    states: Vec<String>,
}

impl PyAffineKernel {
    fn handle(&self) -> KernelHandle {
        self.inner.clone().into()
    }

    fn from_file(file: KernelFile) -> PyResult<Self> {
        let inner = file.to_kernel().map_err(to_py)?;
        Ok(Self {
            inner,
            states: file.states,
        })
    }
}

#[pymethods]
impl PyAffineKernel {
    #[new]
    fn new(base: Vec<Vec<f64>>, coeff: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let inner = AffineKernel::new(base, coeff).map_err(to_py)?;
        let states = (1..=inner.n_states()).map(|i| i.to_string()).collect();
        Ok(Self { inner, states })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_file(KernelFile::load(path).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_file(KernelFile::parse(text).map_err(to_py)?)
    }

    /// The four-state example chain.
    #[staticmethod]
    fn example(gamma: f64) -> PyResult<Self> {
        let chain = build_example(gamma).map_err(to_py)?;
        Self::from_file(KernelFile::from_kernel(chain.kernel(), None))
    }

    fn to_json(&self) -> String {
        KernelFile::from_kernel(&self.inner, Some(self.states.clone())).to_json()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.states.clone()
    }

    #[getter]
    fn base(&self) -> Vec<Vec<f64>> {
        self.inner.base_rows()
    }

    #[getter]
    fn coeff(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.coeff_tensor()
    }

    fn evaluate(&self, mu: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.evaluate(&dist(mu)?).map_err(to_py)?.to_rows())
    }

    fn step(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.handle().step(&dist(mu)?).map_err(to_py)?.into_vec())
    }

    fn law_flow(&self, mu0: Vec<f64>, n: usize) -> PyResult<Vec<Vec<f64>>> {
        let flow = self.handle().law_flow(&dist(mu0)?, n).map_err(to_py)?;
        Ok(flow.into_iter().map(Distribution::into_vec).collect())
    }

    fn k_step_kernel(&self, mu: Vec<f64>, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(self
            .handle()
            .k_step_kernel(&dist(mu)?, k)
            .map_err(to_py)?
            .to_rows())
    }

    /// Exact one-step measure-Lipschitz coefficient.
    fn exact_lambda1(&self) -> f64 {
        coefficients::exact_lambda1_affine(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("AffineKernel(n_states={})", self.inner.n_states())
    }
}

#[pyfunction]
fn tv_distance(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    measure::tv_distance(&dist(mu)?, &dist(nu)?).map_err(to_py)
}

#[pyfunction]
fn simplex_grid(n_states: usize, resolution: usize) -> PyResult<Vec<Vec<f64>>> {
    let grid = measure::simplex_grid(n_states, resolution).map_err(to_py)?;
    Ok(grid.points().iter().map(|p| p.probs().to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (kernel, k, resolution = coefficients::DEFAULT_RESOLUTION, samples = coefficients::DEFAULT_SAMPLES, seed = 0, min_sep = coefficients::DEFAULT_MIN_SEP, tie_tol = coefficients::DEFAULT_TIE_TOL))]
#[allow(clippy::too_many_arguments)]
fn estimate_coefficients<'py>(
    py: Python<'py>,
    kernel: &PyAffineKernel,
    k: usize,
    resolution: usize,
    samples: usize,
    seed: u64,
    min_sep: f64,
    tie_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SearchConfig {
        resolution,
        samples,
        seed,
        min_sep,
        tie_tol,
    };
    let handle = kernel.handle();
    let r = py
        .detach(|| coefficients::estimate_coefficients(&handle, k, &cfg))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("k", r.k)?;
    d.set_item("alpha_k", r.alpha_k)?;
    d.set_item("lambda_k", r.lambda_k)?;
    d.set_item("lambda_1", r.lambda_1)?;
    d.set_item("lambda_1_exact", r.lambda_1_exact)?;
    d.set_item("regime", r.regime.to_string())?;
    if let Some(m) = r.search {
        d.set_item("n_measures", m.n_measures)?;
        d.set_item("alpha_extremum_at_vertices", m.alpha_extremum_at_vertices)?;
    }
    Ok(d)
}

fn params(
    k: usize,
    alpha_k: f64,
    lambda_k: f64,
    lambda_1: Option<f64>,
    initial_tv: f64,
) -> PyResult<BoundParams> {
    let lambda_1 = match (lambda_1, k) {
        (Some(l), _) => l,
        (None, 1) => lambda_k,
        (None, _) => return Err(PyValueError::new_err("lambda_1 is required when k > 1")),
    };
    BoundParams::new(k, alpha_k, lambda_k, lambda_1, initial_tv).map_err(to_py)
}

/// Bound on `tv(mu_n, pi)`; raises `InconclusiveError` outside the
/// exponential and linear regimes.
#[pyfunction]
#[pyo3(signature = (n, k, alpha_k, lambda_k, lambda_1 = None, initial_tv = 2.0))]
fn bound_at(
    n: usize,
    k: usize,
    alpha_k: f64,
    lambda_k: f64,
    lambda_1: Option<f64>,
    initial_tv: f64,
) -> PyResult<f64> {
    core_bound_at(&params(k, alpha_k, lambda_k, lambda_1, initial_tv)?, n).map_err(to_py)
}

#[pyfunction]
fn per_step_rate(k: usize, alpha_k: f64, lambda_k: f64) -> PyResult<f64> {
    core_rate(&params(k, alpha_k, lambda_k, Some(0.0), 2.0)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kernel, mu0, tol = invariant::DEFAULT_TOL, max_iter = invariant::DEFAULT_MAX_ITER))]
fn find_invariant<'py>(
    py: Python<'py>,
    kernel: &PyAffineKernel,
    mu0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mu0 = dist(mu0)?;
    let handle = kernel.handle();
    let fp = py
        .detach(|| invariant::find_invariant(&handle, &mu0, tol, max_iter))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("pi", fp.pi.into_vec())?;
    d.set_item("iterations", fp.iterations)?;
    d.set_item("residual", fp.residual)?;
    d.set_item("converged", fp.converged)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (kernel, mu0, g, n, paths, seed = 0, regime = None))]
#[allow(clippy::too_many_arguments)]
fn lln_experiment<'py>(
    py: Python<'py>,
    kernel: &PyAffineKernel,
    mu0: Vec<f64>,
    g: Vec<f64>,
    n: usize,
    paths: usize,
    seed: u64,
    regime: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let mu0 = dist(mu0)?;
    let regime = regime
        .map(|s| s.parse::<Regime>())
        .transpose()
        .map_err(to_py)?;
    let handle = kernel.handle();
    let r = py
        .detach(|| montecarlo::lln_experiment(&handle, &mu0, &g, n, paths, seed, regime))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("n_steps", r.n_steps)?;
    d.set_item("n_paths", r.n_paths)?;
    d.set_item("seed", r.seed)?;
    d.set_item("grand_mean", r.grand_mean)?;
    d.set_item("sample_std", r.sample_std)?;
    d.set_item("target", r.target)?;
    d.set_item("abs_error", r.abs_error)?;
    d.set_item("z_score", r.z_score)?;
    d.set_item("sample_means", r.sample_means)?;
    d.set_item("warnings", r.warnings)?;
    Ok(d)
}

/// Compares the composed three-step kernel of the example chain with its
/// closed form at `mu`.
#[pyfunction]
#[pyo3(signature = (gamma, mu, tol = 1e-12))]
fn check_three_step<'py>(
    py: Python<'py>,
    gamma: f64,
    mu: Vec<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = check_three_step_symbolic(gamma, &dist(mu)?, tol).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("agrees", c.agrees)?;
    d.set_item("max_abs_diff", c.max_abs_diff)?;
    d.set_item("computed", c.computed)?;
    d.set_item("symbolic", c.symbolic)?;
    Ok(d)
}

type Table1Row = (usize, f64, f64, f64, f64);

/// Rows `(k, gamma, alpha_k, lambda_k, rate)` for the example chain.
#[pyfunction]
#[pyo3(signature = (resolution = coefficients::DEFAULT_RESOLUTION))]
fn table1(py: Python<'_>, resolution: usize) -> PyResult<Vec<Table1Row>> {
    let rows = py.detach(|| core_table1(resolution)).map_err(to_py)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.k, r.gamma, r.alpha_k, r.lambda_k, r.rate))
        .collect())
}

#[pymodule]
fn pynlmarkov(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAffineKernel>()?;
    m.add("InconclusiveError", m.py().get_type::<InconclusiveError>())?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_grid, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(bound_at, m)?)?;
    m.add_function(wrap_pyfunction!(per_step_rate, m)?)?;
    m.add_function(wrap_pyfunction!(find_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(lln_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(check_three_step, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    Ok(())
}
