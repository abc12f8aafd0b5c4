//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use stochflow::diagonal::{self, DiagonalModel, Rule};
use stochflow::error::FlowError;
use stochflow::flow::{self, ChaosConfig};
use stochflow::harness::{self, ExperimentConfig};
use stochflow::noise::{self, TimeGrid};
use stochflow::operators::{self, TruncatedOperator};
use stochflow::schatten::{self, SpectrumModel};

fn err(e: FlowError) -> PyErr {
    if e.is_schema() || matches!(e, FlowError::Domain(_) | FlowError::DimensionMismatch { .. } | FlowError::InvalidOperator(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<TruncatedOperator> {
    TruncatedOperator::from_rows(&rows).map_err(err)
}

fn rule(text: &str) -> PyResult<Rule> {
    let r: Rule = serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("rule: {e}")))?;
    r.validate().map_err(err)?;
    Ok(r)
}

/// Drift `B_0` and noise operators `B_1..B_K`.
#[pyclass(name = "OperatorFamily", frozen)]
struct PyFamily(operators::OperatorFamily);

#[pymethods]
impl PyFamily {
    #[new]
    fn new(drift: Vec<Vec<f64>>, noise: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let noise = noise.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        Ok(Self(operators::OperatorFamily::new(matrix(drift)?, noise).map_err(err)?))
    }

    #[staticmethod]
    fn random(dim: usize, count: usize, drift_norm: f64, noise_norm: f64, seed: u64) -> Self {
        Self(operators::random_family(dim, count, drift_norm, noise_norm, seed))
    }

    #[staticmethod]
    fn commuting(dim: usize, count: usize, drift_norm: f64, noise_norm: f64, seed: u64) -> Self {
        Self(operators::random_commuting_family(dim, count, drift_norm, noise_norm, seed))
    }

    /// `fields[k][node]` is the 3-vector `g_k` at that node.
    #[staticmethod]
    fn cross_product(fields: Vec<Vec<[f64; 3]>>) -> PyResult<Self> {
        Ok(Self(operators::cross_product_family(&fields).map_err(err)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn noise_count(&self) -> usize {
        self.0.noise_count()
    }

    /// `Σ_k ‖B_k‖`.
    #[getter]
    fn bound(&self) -> f64 {
        self.0.bound()
    }

    fn drift(&self) -> Vec<Vec<f64>> {
        self.0.drift().to_rows()
    }

    fn noise(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.noise().iter().map(|b| b.to_rows()).collect()
    }

    fn is_commuting(&self) -> bool {
        self.0.ensure_commuting().is_ok()
    }

    fn __repr__(&self) -> String {
        format!("OperatorFamily(dim={}, noise_count={}, bound={})", self.0.dim(), self.0.noise_count(), self.0.bound())
    }
}

/// Brownian paths on a uniform grid.
#[pyclass(name = "WienerPaths", frozen)]
struct PyPaths(noise::WienerPaths);

#[pymethods]
impl PyPaths {
    #[staticmethod]
    #[pyo3(signature = (start, end, steps, count, seed))]
    fn sample(start: f64, end: f64, steps: usize, count: usize, seed: u64) -> PyResult<Self> {
        let grid = TimeGrid::new(start, end, steps).map_err(err)?;
        Ok(Self(noise::sample_wiener(grid, count, seed).map_err(err)?))
    }

    fn times(&self) -> Vec<f64> {
        self.0.grid().points()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values().to_vec()
    }

    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }
}

/// Frames `𝒴(s, t_i)` on the grid.
#[pyclass(name = "FlowSample", frozen)]
struct PyFlow(flow::FlowSample);

#[pymethods]
impl PyFlow {
    fn times(&self) -> Vec<f64> {
        self.0.grid().points()
    }

    fn frames(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.frames().iter().map(|f| f.to_rows()).collect()
    }

    fn terminal(&self) -> Vec<Vec<f64>> {
        self.0.terminal().to_rows()
    }

    #[getter]
    fn solver(&self) -> &'static str {
        self.0.solver().name()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (family, paths, generator=None))]
fn euler_flow(family: &PyFamily, paths: &PyPaths, generator: Option<Vec<Vec<f64>>>) -> PyResult<PyFlow> {
    let a = generator.map(matrix).transpose()?;
    Ok(PyFlow(flow::euler_flow(a.as_ref(), &family.0, &paths.0).map_err(err)?))
}

#[pyfunction]
fn inverse_flow(family: &PyFamily, paths: &PyPaths) -> PyResult<PyFlow> {
    Ok(PyFlow(flow::inverse_flow(&family.0, &paths.0).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (family, paths, max_order, moment_l=2))]
fn chaos_flow(family: &PyFamily, paths: &PyPaths, max_order: usize, moment_l: u32) -> PyResult<PyFlow> {
    let cfg = ChaosConfig::new(max_order, family.0.noise_count(), moment_l).map_err(err)?;
    Ok(PyFlow(flow::chaos_flow(&family.0, &paths.0, &cfg).map_err(err)?))
}

#[pyfunction]
fn commutative_ito_flow(family: &PyFamily, paths: &PyPaths) -> PyResult<PyFlow> {
    Ok(PyFlow(flow::commutative_ito_flow(&family.0, &paths.0).map_err(err)?))
}

#[pyfunction]
fn commutative_strat_flow(family: &PyFamily, paths: &PyPaths) -> PyResult<PyFlow> {
    Ok(PyFlow(flow::commutative_strat_flow(&family.0, &paths.0).map_err(err)?))
}

#[pyfunction]
fn chaos_tail_bound(m: f64, delta: f64, moment_l: u32, max_order: usize) -> PyResult<f64> {
    flow::chaos_tail_bound(m, delta, moment_l, max_order).map_err(err)
}

#[pyfunction]
fn operator_norm(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    operators::operator_norm(&matrix(rows)?).map_err(err)
}

#[pyfunction]
fn schatten_norm(rows: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    operators::schatten_norm(&matrix(rows)?, p).map_err(err)
}

#[pyfunction]
fn matrix_exponential(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(operators::matrix_exponential(&matrix(rows)?).map_err(err)?.to_rows())
}

/// Diagonal model `dX_k = α_k X_k dt + σ_k X_k dW_k`. Rules are JSON
/// objects such as `{"kind": "log_power", "coef": 1.0, "exp": 1.0}`.
#[pyclass(name = "DiagonalModel", frozen)]
struct PyDiagonal(DiagonalModel);

#[pymethods]
impl PyDiagonal {
    #[new]
    fn new(alpha: &str, sigma: &str, cutoff: usize) -> PyResult<Self> {
        Ok(Self(DiagonalModel::new(rule(alpha)?, rule(sigma)?, cutoff).map_err(err)?))
    }

    #[staticmethod]
    fn skorokhod(sigma: f64, cutoff: usize) -> PyResult<Self> {
        Ok(Self(DiagonalModel::skorokhod(sigma, cutoff).map_err(err)?))
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.0.cutoff()
    }

    /// `(E ζ_k, E ζ_k²)` over a horizon `delta`.
    fn zeta_moments(&self, k: usize, delta: f64) -> PyResult<(f64, f64)> {
        diagonal::zeta_moments(&self.0, k, delta).map_err(err)
    }

    fn sample_zeta(&self, k: usize, delta: f64, seed: u64) -> PyResult<f64> {
        diagonal::sample_zeta(&self.0, k, delta, seed).map_err(err)
    }

    /// `(partial_sums, analytic_mean)` of the trace up to `k_max`.
    fn sample_trace(&self, s: f64, t: f64, seed: u64, k_max: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let c = diagonal::sample_trace(&self.0, s, t, seed, k_max).map_err(err)?;
        Ok((c.partial_sums, c.analytic_mean))
    }

    /// Every criterion as a JSON document.
    fn criteria_report(&self, s: f64, t: f64, k_max: usize) -> PyResult<String> {
        json(&diagonal::criteria_report(&self.0, s, t, k_max).map_err(err)?)
    }
}

#[pyfunction]
fn dirichlet_laplacian_eigenvalues(n_max: usize) -> PyResult<Vec<f64>> {
    Ok(schatten::dirichlet_laplacian_spectrum(n_max).map_err(err)?.eigenvalues().to_vec())
}

/// `‖e^{−t diag(λ)}‖_p`.
#[pyfunction]
fn semigroup_schatten_norm(eigenvalues: Vec<f64>, t: f64, p: f64) -> PyResult<f64> {
    let spec = SpectrumModel::from_values(eigenvalues).map_err(err)?;
    Ok(schatten::semigroup_schatten_norm(&spec, t, p).map_err(err)?.value)
}

/// Fitted smoothing exponent on the Dirichlet Laplacian, as JSON.
#[pyfunction]
fn laplacian_smoothing(n_max: usize, p: f64, t_grid: Vec<f64>) -> PyResult<String> {
    let spec = schatten::dirichlet_laplacian_spectrum(n_max).map_err(err)?;
    json(&schatten::check_smoothing(&spec, p, &t_grid).map_err(err)?)
}

/// Runs a named experiment from a TOML document; returns the verdict as JSON.
#[pyfunction]
fn run_experiment(config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    json(&harness::run_experiment(&cfg).map_err(err)?)
}

#[pyfunction]
fn experiment_names() -> Vec<&'static str> {
    harness::Experiment::ALL.iter().map(|e| e.name()).collect()
}

#[pymodule]
fn stochflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFamily>()?;
    m.add_class::<PyPaths>()?;
    m.add_class::<PyFlow>()?;
    m.add_class::<PyDiagonal>()?;
    m.add_function(wrap_pyfunction!(euler_flow, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_flow, m)?)?;
    m.add_function(wrap_pyfunction!(chaos_flow, m)?)?;
    m.add_function(wrap_pyfunction!(commutative_ito_flow, m)?)?;
    m.add_function(wrap_pyfunction!(commutative_strat_flow, m)?)?;
    m.add_function(wrap_pyfunction!(chaos_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(operator_norm, m)?)?;
    m.add_function(wrap_pyfunction!(schatten_norm, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_laplacian_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup_schatten_norm, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian_smoothing, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_names, m)?)?;
    Ok(())
}
