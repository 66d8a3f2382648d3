//! Python bindings.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use num_complex::Complex64;
use qcomp_core::harness::{self, ExperimentConfig};
use qcomp_core::network::{self, TargetSinr};
use qcomp_core::{
    percell_solve as core_percell, quantization, solve_deterministic as core_deterministic, solve_icomp as core_icomp,
    Bits, ChannelSet, ComplexMatrix, Error, OfdmProblem, PercellConfig, Scenario, SolveReport, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(qcomp, QcompError, PyException);
create_exception!(qcomp, InfeasibleError, QcompError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) | Error::NonPositiveTau { .. } | Error::SingularSigma(_) => {
            InfeasibleError::new_err(e.to_string())
        }
        Error::Config(_) | Error::DimensionMismatch(_) | Error::InvalidBits(_) => PyValueError::new_err(e.to_string()),
        other => QcompError::new_err(other.to_string()),
    }
}

fn parse_bits(obj: &Bound<'_, PyAny>) -> PyResult<Bits> {
    if let Ok(b) = obj.extract::<i64>() {
        return Bits::from_int(b).map_err(to_py);
    }
    let s: String = obj.extract()?;
    s.parse::<Bits>().map_err(|e| PyValueError::new_err(e.to_string()))
}

fn bits_to_py(py: Python<'_>, b: Bits) -> PyResult<Py<PyAny>> {
    Ok(match b {
        Bits::Finite(n) => n.into_pyobject(py)?.into_any().unbind(),
        Bits::Infinite => "inf".into_pyobject(py)?.into_any().unbind(),
    })
}

/// Network layout, propagation and target settings.
#[pyclass(name = "Scenario", module = "qcomp", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (n_cells=2, n_users_per_cell=2, n_bs_antennas=64, bits=None, n_subcarriers=1, n_taps=1, target_sinr_db=0.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_cells: usize,
        n_users_per_cell: usize,
        n_bs_antennas: usize,
        bits: Option<&Bound<'_, PyAny>>,
        n_subcarriers: usize,
        n_taps: usize,
        target_sinr_db: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let mut inner = Scenario {
            n_cells,
            n_users_per_cell,
            n_bs_antennas,
            n_subcarriers,
            n_taps,
            target_sinr_db: TargetSinr::Scalar(target_sinr_db),
            seed,
            ..Scenario::default()
        };
        if let Some(b) = bits {
            inner.adc_dac_bits = parse_bits(b)?;
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Scenario from a TOML table with any subset of the fields.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner: Scenario = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells
    }

    #[getter]
    fn n_users_per_cell(&self) -> usize {
        self.inner.n_users_per_cell
    }

    #[getter]
    fn n_bs_antennas(&self) -> usize {
        self.inner.n_bs_antennas
    }

    #[getter]
    fn bits(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        bits_to_py(py, self.inner.adc_dac_bits)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Linear targets indexed `(k·N_c + i)·N_u + u`.
    fn gamma_linear(&self) -> PyResult<Vec<f64>> {
        self.inner.gamma_linear().map_err(to_py)
    }

    fn noise_power_dbm(&self) -> f64 {
        self.inner.noise_power_dbm()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(n_cells={}, n_users_per_cell={}, n_bs_antennas={}, bits={}, seed={})",
            self.inner.n_cells, self.inner.n_users_per_cell, self.inner.n_bs_antennas, self.inner.adc_dac_bits, self.inner.seed
        )
    }
}

/// Uplink channel taps between every base station and every cell's users.
#[pyclass(name = "Channels", module = "qcomp", skip_from_py_object)]
#[derive(Clone)]
struct PyChannels {
    inner: ChannelSet,
}

fn matrix_to_lists(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn lists_to_matrix(rows: &[Vec<Complex64>]) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("channel matrices must be non-empty and rectangular"));
    }
    Ok(ComplexMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

#[pymethods]
impl PyChannels {
    /// `taps[(i·n_cells + j)·n_taps + l]` is the `N_b × N_u` tap `l` from
    /// cell `j`'s users to base station `i`.
    #[new]
    #[pyo3(signature = (n_cells, taps, n_taps=1))]
    fn new(n_cells: usize, taps: Vec<Vec<Vec<Complex64>>>, n_taps: usize) -> PyResult<Self> {
        let taps = taps.iter().map(|t| lists_to_matrix(t)).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: ChannelSet::new(n_cells, n_taps, taps).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    #[getter]
    fn n_antennas(&self) -> usize {
        self.inner.n_antennas()
    }

    #[getter]
    fn n_taps(&self) -> usize {
        self.inner.n_taps()
    }

    /// Tap `l` from cell `j`'s users to base station `i` as nested lists.
    #[pyo3(signature = (i, j, l=0))]
    fn tap(&self, i: usize, j: usize, l: usize) -> PyResult<Vec<Vec<Complex64>>> {
        if i >= self.inner.n_cells() || j >= self.inner.n_cells() || l >= self.inner.n_taps() {
            return Err(PyValueError::new_err("tap index out of range"));
        }
        Ok(matrix_to_lists(self.inner.tap(i, j, l)))
    }
}

/// Channels for `scenario`, drawn with `seed` (the scenario's seed when absent).
#[pyfunction]
#[pyo3(signature = (scenario, seed=None))]
fn generate_channels(scenario: &PyScenario, seed: Option<u64>) -> PyResult<PyChannels> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(scenario.inner.seed));
    let (_, ch) = network::draw_channels(&scenario.inner, &mut rng).map_err(to_py)?;
    Ok(PyChannels { inner: ch })
}

/// Unit-gain Rayleigh channels.
#[pyfunction]
#[pyo3(signature = (n_cells, n_users, n_antennas, n_taps=1, seed=0))]
fn rayleigh_channels(n_cells: usize, n_users: usize, n_antennas: usize, n_taps: usize, seed: u64) -> PyChannels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PyChannels {
        inner: network::rayleigh_channels(n_cells, n_users, n_antennas, n_taps, &mut rng),
    }
}

/// `(alpha, beta)` for a bit depth (int or "inf").
#[pyfunction]
fn quant_gain(bits: &Bound<'_, PyAny>) -> PyResult<(f64, f64)> {
    let q = quantization::quant_gain(parse_bits(bits)?).map_err(to_py)?;
    Ok((q.alpha, q.beta))
}

#[pyfunction]
#[pyo3(signature = (bits, samples=1_000_000, seed=0))]
fn lloyd_max_mse(bits: u32, samples: usize, seed: u64) -> PyResult<f64> {
    if bits == 0 {
        return Err(PyValueError::new_err("bits must be at least 1"));
    }
    Ok(quantization::lloyd_max_mse(bits, samples, seed))
}

fn solver_config(tol: f64, max_iter: usize) -> SolverConfig {
    SolverConfig {
        tol,
        max_iter,
        ..SolverConfig::default()
    }
}

fn report_dict<'py>(py: Python<'py>, r: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("converged", r.converged)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("final_total_power", r.final_total_power)?;
    d.set_item("per_iteration_total_power", r.per_iteration_total_power.clone())?;
    d.set_item("achieved_sinr", r.achieved_sinr.clone())?;
    d.set_item("duality_gap", r.duality_gap)?;
    Ok(d)
}

/// Joint uplink/downlink solve on flat channels.
#[pyfunction]
#[pyo3(signature = (channels, gamma, alpha, tol=1e-10, max_iter=10_000))]
fn solve_icomp<'py>(
    py: Python<'py>,
    channels: &PyChannels,
    gamma: Vec<f64>,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let s = core_icomp(&channels.inner, &gamma, alpha, &solver_config(tol, max_iter)).map_err(to_py)?;
    let d = report_dict(py, &s.report)?;
    d.set_item("lambda", s.power.lambda.clone())?;
    d.set_item("tau", s.beamformers.tau.clone())?;
    d.set_item("ul_sinr", s.audit.ul_sinr.clone())?;
    d.set_item("total_ul_power", s.audit.total_ul_power)?;
    d.set_item("total_dl_power", s.audit.total_dl_power)?;
    Ok(d)
}

/// Closed-form per-cell powers for per-cell targets.
#[pyfunction]
fn solve_deterministic<'py>(
    py: Python<'py>,
    channels: &PyChannels,
    gamma_per_cell: Vec<f64>,
    alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = core_deterministic(&channels.inner, &gamma_per_cell, alpha).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("lambda", s.power.lambda.clone())?;
    d.set_item("raw_lambda", s.raw_lambda.clone())?;
    d.set_item("zeroed_cells", s.repair.zeroed_cells.clone())?;
    d.set_item("absolute_value_applied", s.repair.absolute_value_applied)?;
    Ok(d)
}

/// Uncoordinated per-cell baseline.
#[pyfunction]
fn percell_solve<'py>(py: Python<'py>, channels: &PyChannels, gamma: Vec<f64>, alpha: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = core_percell(&channels.inner, &gamma, alpha, &PercellConfig::default()).map_err(to_py)?;
    let d = report_dict(py, &s.report)?;
    d.set_item("tau", s.beamformers.tau.clone())?;
    Ok(d)
}

/// Joint solve over `n_subcarriers` subcarriers of a multipath channel.
#[pyfunction]
#[pyo3(signature = (channels, n_subcarriers, gamma, alpha, tol=1e-10, max_iter=10_000))]
fn solve_ofdm<'py>(
    py: Python<'py>,
    channels: &PyChannels,
    n_subcarriers: usize,
    gamma: Vec<f64>,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = OfdmProblem::new(channels.inner.clone(), n_subcarriers, gamma, alpha).map_err(to_py)?;
    let s = problem.solve(&solver_config(tol, max_iter)).map_err(to_py)?;
    let d = report_dict(py, &s.report)?;
    d.set_item("lambda", s.power.lambda.clone())?;
    d.set_item("tau", s.beamformers.tau.clone())?;
    d.set_item("total_ul_power", s.audit.total_ul_power)?;
    d.set_item("total_dl_power", s.audit.total_dl_power)?;
    Ok(d)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any().unbind(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any().unbind(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

/// Runs the experiment described by a TOML configuration and returns the
/// trial records as dictionaries. Writes the output files when `write` is set.
#[pyfunction]
#[pyo3(signature = (config_toml, write=false))]
fn run_experiment(py: Python<'_>, config_toml: &str, write: bool) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py)?;
    let records = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    if write {
        harness::write_outputs(&cfg, &records).map_err(to_py)?;
    }
    let value = serde_json::to_value(&records).map_err(|e| QcompError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

#[pymodule]
fn qcomp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QcompError", m.py().get_type::<QcompError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyChannels>()?;
    m.add_function(wrap_pyfunction!(generate_channels, m)?)?;
    m.add_function(wrap_pyfunction!(rayleigh_channels, m)?)?;
    m.add_function(wrap_pyfunction!(quant_gain, m)?)?;
    m.add_function(wrap_pyfunction!(lloyd_max_mse, m)?)?;
    m.add_function(wrap_pyfunction!(solve_icomp, m)?)?;
    m.add_function(wrap_pyfunction!(solve_deterministic, m)?)?;
    m.add_function(wrap_pyfunction!(percell_solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ofdm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
